//! Batch experiments: JSON configuration, claim evaluation and the files a
//! run leaves behind (manifest, moment table, verdicts).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{attach_bounds, calibrate_c_eps, check_exist_unique_bound, BoundVerdict};
use crate::conv::{check_lemma_pp_with_theta, star2_pair, NestedConvolution};
use crate::error::{Error, Result};
use crate::kernel::{KernelModel, KernelSpec};
use crate::measure::FiniteMeasure;
use crate::noise::NoiseStream;
use crate::solver::{replicate, sample_stats, GridSpec, LatticePlan, MomentTable, OracleOptions, PamOracle, PositivityScan, SigmaSpec};

pub const CLAIMS: &[&str] = &[
    "lemma_pp",
    "lemma_star2",
    "mean_identity",
    "second_moment_oracle",
    "exist_unique_bound",
    "h1_bound",
    "positivity",
];

const MC_CLAIMS: &[&str] = &["mean_identity", "second_moment_oracle", "exist_unique_bound", "h1_bound", "positivity"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { first: u64, count: usize },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { first, count } => (0..*count as u64).map(|i| first + i).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub t: f64,
    pub x: f64,
}

fn default_ks() -> Vec<f64> {
    vec![2.0]
}

fn default_eps() -> f64 {
    0.1
}

fn default_output() -> PathBuf {
    PathBuf::from("levyheat-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub u0: FiniteMeasure,
    pub sigma: SigmaSpec,
    pub grid: GridSpec,
    pub seeds: SeedSpec,
    /// Probe points, snapped to the nearest lattice node. Empty means a
    /// default 4 × 5 set.
    #[serde(default)]
    pub probes: Vec<Probe>,
    /// Moment orders for the moment table.
    #[serde(default = "default_ks")]
    pub ks: Vec<f64>,
    /// ε in the exponential rate (1+ε)γ(k).
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub claims: Vec<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        for c in &self.claims {
            if !CLAIMS.contains(&c.as_str()) {
                return bad(format!("unknown claim id {c:?}"));
            }
        }
        self.grid.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        if self.seeds.seeds().is_empty() && self.needs_monte_carlo() {
            return bad("Monte Carlo claims need at least one seed".into());
        }
        if self.ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return bad("moment orders must be positive".into());
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive".into());
        }
        for p in &self.probes {
            if !(p.t > 0.0 && p.t <= self.grid.t_end * (1.0 + 1e-12) && p.x.abs() <= self.grid.half_width) {
                return bad(format!("probe {p:?} outside the lattice"));
            }
        }
        if self.claims.iter().any(|c| c == "second_moment_oracle") && self.sigma.linear_coefficient().is_none() {
            return bad("second_moment_oracle needs a linear sigma".into());
        }
        if self.claims.iter().any(|c| c == "exist_unique_bound") && self.probe_points().len() < 2 {
            return bad("exist_unique_bound needs at least two probes (calibration and check)".into());
        }
        Ok(())
    }

    fn needs_monte_carlo(&self) -> bool {
        self.claims.iter().any(|c| MC_CLAIMS.contains(&c.as_str()))
    }

    fn has(&self, claim: &str) -> bool {
        self.claims.iter().any(|c| c == claim)
    }

    pub fn probe_points(&self) -> Vec<Probe> {
        if !self.probes.is_empty() {
            return self.probes.clone();
        }
        let t_end = self.grid.t_end;
        let mut out = Vec::new();
        for f in [0.25, 0.5, 0.75, 1.0] {
            for x in [0.0, 0.25, 0.5, 1.0, 2.0] {
                if x <= self.grid.half_width {
                    out.push(Probe { t: f * t_end, x });
                }
            }
        }
        out
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a run computes.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub verdicts: Vec<BoundVerdict>,
    pub moments: Option<MomentTable>,
    pub manifest: serde_json::Value,
}

impl RunOutcome {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

struct SeedResult {
    probes: Vec<f64>,
    scan: Option<PositivityScan>,
}

/// Evaluates every selected claim; writes nothing.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let model = KernelModel::from_spec(&cfg.kernel).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let u0 = &cfg.u0;
    let seeds = cfg.seeds.seeds();
    let mut verdicts = Vec::new();
    let mut manifest = serde_json::json!({
        "config_hash": cfg.hash(),
        "versions": { "levyheat": env!("CARGO_PKG_VERSION") },
        "kernel": model.label(),
        "seeds": seeds,
        "claims": cfg.claims,
    });
    let needs_theta = cfg.has("lemma_pp") || cfg.has("lemma_star2");
    let theta = if needs_theta { Some(model.theta()?.value) } else { None };

    if cfg.has("lemma_pp") {
        let theta = theta.expect("theta computed");
        for i in 0..=12 {
            let t = 10f64.powf(-3.0 + i as f64 / 3.0);
            let p = check_lemma_pp_with_theta(&model, theta, t)?;
            let tag = format!("lemma_pp[t={t:.4e}]");
            verdicts.push(BoundVerdict::new(format!("{tag}.lower"), p.lower, p.mid, 0.0));
            verdicts.push(BoundVerdict::new(format!("{tag}.upper"), p.mid, p.upper, 0.0));
        }
    }
    if cfg.has("lemma_star2") {
        let theta = theta.expect("theta computed");
        let nested = NestedConvolution::new(&model, 2)?;
        for p in cfg.probe_points() {
            for n in [1, 2] {
                let (lhs, rhs) = star2_pair(&nested, theta, u0, n, p.t, p.x)?;
                verdicts.push(BoundVerdict::new(format!("lemma_star2[n={n},t={},x={}]", p.t, p.x), lhs, 1.01 * rhs, 0.0));
            }
        }
    }

    let mut moments = None;
    if cfg.needs_monte_carlo() {
        let plan = LatticePlan::new(&model, u0, &cfg.grid)?;
        manifest["lattice"] = serde_json::json!({
            "nx": plan.nx(),
            "nt": plan.nt(),
            "dt": plan.dt(),
            "dx": plan.dx(),
            "truncation_outside": plan.truncation_outside(),
            "refinement_ratio": plan.refinement_ratio(),
            "propagator_defect": plan.propagator_defect(),
        });
        let probes: Vec<(usize, usize)> = cfg.probe_points().iter().map(|p| (plan.t_index(p.t), plan.x_index(p.x))).collect();
        let eps_num = plan.positivity_tolerance();
        let scan = cfg.has("positivity");
        let steps = if scan { plan.nt() } else { probes.iter().map(|p| p.0 + 1).max().unwrap_or(0) };
        let per_seed = replicate(&seeds, |seed| {
            let noise = NoiseStream::new(plan.dt(), plan.dx(), plan.nx(), seed)?;
            let mut state = plan.initial_state();
            let mut out = vec![0.0; probes.len()];
            let mut acc = PositivityScan { min_value: f64::INFINITY, violations: 0, cells: 0, eps_num };
            plan.advance(&cfg.sigma, &noise, &mut state, steps, |n, u| {
                for (o, &(i, j)) in out.iter_mut().zip(&probes) {
                    if i == n {
                        *o = u[j];
                    }
                }
                if scan {
                    acc.min_value = u.iter().copied().fold(acc.min_value, f64::min);
                    acc.violations += u.iter().filter(|&&v| v < -eps_num).count();
                    acc.cells += u.len();
                }
            })?;
            Ok(SeedResult { probes: out, scan: scan.then_some(acc) })
        })?;
        let samples: Vec<Vec<f64>> = per_seed.iter().map(|s| s.probes.clone()).collect();

        if cfg.has("mean_identity") {
            for (p, &(i, j)) in probes.iter().enumerate() {
                let col: Vec<f64> = samples.iter().map(|s| s[p]).collect();
                let st = sample_stats(&col);
                let exact = plan.det_row(i)[j];
                let (t, x) = (plan.t_nodes()[i], plan.x_nodes()[j]);
                verdicts.push(BoundVerdict::new(format!("mean_identity[t={t},x={x}]"), (st.mean - exact).abs(), 0.0, st.std_error));
            }
        }
        if cfg.has("second_moment_oracle") {
            let lambda = cfg.sigma.linear_coefficient().expect("validated linear sigma");
            let t_min = probes.iter().map(|p| plan.t_nodes()[p.0]).fold(f64::INFINITY, f64::min);
            let t_max = probes.iter().map(|p| plan.t_nodes()[p.0]).fold(0.0, f64::max);
            let x_max = probes.iter().map(|p| plan.x_nodes()[p.1].abs()).fold(0.0, f64::max);
            let oracle = PamOracle::new(&model, u0, lambda, t_min, t_max, OracleOptions { steps: 1024, x_max: x_max.max(1.0) })?;
            for (p, &(i, j)) in probes.iter().enumerate() {
                let col: Vec<f64> = samples.iter().map(|s| s[p] * s[p]).collect();
                let st = sample_stats(&col);
                let (t, x) = (plan.t_nodes()[i], plan.x_nodes()[j]);
                let exact = oracle.eval(t, x)?;
                verdicts.push(BoundVerdict::new(format!("second_moment_oracle[t={t},x={x}]"), (st.mean - exact).abs(), 0.0, st.std_error));
            }
        }
        if cfg.has("positivity") {
            let total = per_seed.iter().filter_map(|s| s.scan).fold(
                PositivityScan { min_value: f64::INFINITY, violations: 0, cells: 0, eps_num },
                |a, b| PositivityScan {
                    min_value: a.min_value.min(b.min_value),
                    violations: a.violations + b.violations,
                    cells: a.cells + b.cells,
                    eps_num,
                },
            );
            verdicts.push(
                BoundVerdict::new("positivity.fraction", total.fraction(), 0.01, 0.0)
                    .with_meta("violations", total.violations)
                    .with_meta("min_value", total.min_value)
                    .with_meta("eps_num", eps_num),
            );
        }

        let mut table = MomentTable::from_samples(&plan, &probes, &samples, &cfg.ks);
        let mut constants = Vec::new();
        if cfg.has("exist_unique_bound") {
            for &k in &cfg.ks {
                // even-indexed probes calibrate C_ε, odd-indexed ones test it
                let train: Vec<_> = table.rows.iter().filter(|r| r.k == k).step_by(2).copied().collect();
                let c = calibrate_c_eps(&train, &model, u0, &cfg.sigma, k, cfg.eps)?;
                constants.push((k, c));
                let test = MomentTable { rows: table.rows.iter().filter(|r| r.k == k).skip(1).step_by(2).copied().collect() };
                for v in check_exist_unique_bound(&test, &model, u0, &cfg.sigma, k, cfg.eps, c)? {
                    let id = format!("exist_unique_bound[k={k},t={},x={}]", v.metadata["t"], v.metadata["x"]);
                    verdicts.push(BoundVerdict { claim_id: id, ..v });
                }
            }
            manifest["c_eps"] = serde_json::json!(constants);
        }
        attach_bounds(&mut table, &model, u0, &cfg.sigma, cfg.eps, &constants)?;
        if cfg.has("h1_bound") {
            for r in table.rows.iter().filter(|r| r.bound_h1.is_some()) {
                let id = format!("h1_bound[k={},t={},x={}]", r.k, r.t, r.x);
                verdicts.push(BoundVerdict::new(id, r.estimate, r.bound_h1.unwrap(), r.std_error));
            }
        }
        moments = Some(table);
    }
    Ok(RunOutcome { verdicts, moments, manifest })
}

pub fn write_verdicts_csv<W: std::io::Write>(verdicts: &[BoundVerdict], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["claim_id", "lhs", "rhs", "std_error", "pass"])?;
    for v in verdicts {
        w.write_record([v.claim_id.clone(), format!("{:e}", v.lhs), format!("{:e}", v.rhs), format!("{:e}", v.std_error), v.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `cfg` and writes manifest.json, verdicts.csv and (when Monte Carlo
/// ran) moments.csv into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let mut outcome = evaluate(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    if let Some(table) = &outcome.moments {
        table.write_csv(&out_dir.join("moments.csv"))?;
        files.push("moments.csv");
    }
    if !cfg.claims.is_empty() {
        let f = fs::File::create(out_dir.join("verdicts.csv"))?;
        write_verdicts_csv(&outcome.verdicts, f)?;
        files.push("verdicts.csv");
    }
    outcome.manifest["outputs"] = serde_json::json!(files);
    outcome.manifest["all_pass"] = serde_json::json!(outcome.all_pass());
    let text = serde_json::to_string_pretty(&outcome.manifest).expect("manifest serializes");
    fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(outcome)
}

/// Long-format rows (t, x, k, estimate, bound) from a run directory's
/// moments.csv; `bound` is the existence-uniqueness bound when present.
pub fn report<W: std::io::Write>(run_dir: &Path, w: W) -> Result<()> {
    let path = run_dir.join("moments.csv");
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::Io(format!("moments.csv lacks column {name}")));
    let (ct, cx, ck, ce, cb) = (col("t")?, col("x")?, col("k")?, col("estimate")?, col("bound_exist_unique")?);
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["t", "x", "k", "estimate", "bound"])?;
    for rec in r.records() {
        let rec = rec?;
        w.write_record([&rec[ct], &rec[cx], &rec[ck], &rec[ce], &rec[cb]])?;
    }
    w.flush()?;
    Ok(())
}

/// Query for `levyheat kernel`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelQuery {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub k: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default = "one")]
    pub lip: f64,
}

fn one() -> f64 {
    1.0
}

/// Kernel functionals as JSON; failures land in an "error" field.
pub fn kernel_info(query: &KernelQuery) -> serde_json::Value {
    let inner = || -> Result<serde_json::Value> {
        let model = KernelModel::from_spec(&query.kernel)?;
        let f = model.functionals()?;
        let upsilon: Vec<f64> = query.beta.iter().map(|&b| f.upsilon(b)).collect::<Result<_>>()?;
        let gamma: Vec<f64> = query.k.iter().map(|&k| f.gamma(k, query.lip)).collect::<Result<_>>()?;
        let g: Vec<f64> = query.a.iter().map(|&a| f.g(a)).collect::<Result<_>>()?;
        let frak: Vec<f64> = query.k.iter().map(|&k| f.frak_t(k, query.lip)).collect::<Result<_>>()?;
        Ok(serde_json::json!({
            "kernel": model.label(),
            "theta": f.theta(),
            "upsilon": upsilon,
            "gamma": gamma,
            "g": g,
            "frak_T": frak,
        }))
    };
    inner().unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() }))
}

/// Lemma-pp triples for one kernel on the log grid t = 10^{−3 + i/3}, i = 0..=12.
pub fn convolution_csv<W: std::io::Write>(kernel: &KernelSpec, w: W) -> Result<bool> {
    let model = KernelModel::from_spec(kernel)?;
    let theta = model.theta()?.value;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["kernel", "t", "lower", "mid", "upper", "pass"])?;
    let mut all = true;
    for i in 0..=12 {
        let t = 10f64.powf(-3.0 + i as f64 / 3.0);
        let p = check_lemma_pp_with_theta(&model, theta, t)?;
        let pass = p.ordered(0.0);
        all &= pass;
        w.write_record([model.label(), format!("{t:e}"), format!("{:e}", p.lower), format!("{:e}", p.mid), format!("{:e}", p.upper), pass.to_string()])?;
    }
    w.flush()?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "kernel": {"kind": "brownian", "kappa": 1.0},
            "u0": {"atoms": [[0.0, 1.0]]},
            "sigma": {"kind": "linear", "lambda": 1.0},
            "grid": {"dt": 0.0078125, "dx": 0.1875, "L": 6.0, "t_end": 0.5},
            "seeds": {"first": 0, "count": 40},
            "claims": []
        })
    }

    #[test]
    fn unknown_claims_and_kernels_are_rejected() {
        let mut v = base();
        v["claims"] = serde_json::json!(["nonsense"]);
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::ConfigInvalid(_))));
        let mut v = base();
        v["kernel"] = serde_json::json!({"kind": "cauchy_like"});
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn empty_claims_write_manifest_only() {
        let cfg = ExperimentConfig::from_json(&base().to_string()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg, dir.path()).unwrap();
        assert!(out.all_pass() && out.verdicts.is_empty());
        let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert_eq!(names, vec!["manifest.json".to_string()]);
    }

    #[test]
    fn small_run_is_reproducible_and_reportable() {
        let mut v = base();
        v["claims"] = serde_json::json!(["mean_identity", "h1_bound", "exist_unique_bound", "positivity"]);
        v["ks"] = serde_json::json!([2.0, 4.0]);
        let cfg = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run(&cfg, a.path()).unwrap();
        run(&cfg, b.path()).unwrap();
        for f in ["moments.csv", "verdicts.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let mut out = Vec::new();
        report(a.path(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,x,k,estimate,bound\n"));
        assert_eq!(text.lines().count(), 1 + 20 * 2);
    }

    #[test]
    fn kernel_info_reports_closed_forms_and_errors() {
        let q: KernelQuery = serde_json::from_value(serde_json::json!({
            "kernel": {"kind": "brownian", "kappa": 1.0}, "beta": [1.0, 4.0], "k": [2.0, 3.0], "lip": 1.0
        }))
        .unwrap();
        let out = kernel_info(&q);
        assert!((out["theta"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-9);
        assert!((out["upsilon"][1].as_f64().unwrap() - 0.25).abs() < 1e-8);
        assert!((out["gamma"][1].as_f64().unwrap() - 54.0).abs() < 1e-4);
        let q: KernelQuery = serde_json::from_value(serde_json::json!({"kernel": {"kind": "stable", "alpha": 1.0, "kappa": 1.0}})).unwrap();
        assert!(kernel_info(&q)["error"].as_str().unwrap().contains("divergent resolvent"));
    }
}
