use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinearity family, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaKind {
    /// σ(u) = λu.
    Linear { lambda: f64 },
    /// σ(u) = λc·tanh(u/c): linear near 0, saturating at ±λc.
    SaturatingLinear { lambda: f64, cap: f64 },
    /// Piecewise-linear through the given knots, extended with the end
    /// slopes. Must pass through the origin.
    Custom { x: Vec<f64>, y: Vec<f64> },
}

/// A globally Lipschitz σ with σ(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SigmaKind", into = "SigmaKind")]
pub struct SigmaSpec {
    kind: SigmaKind,
    lip: f64,
    lower_lip: f64,
}

impl TryFrom<SigmaKind> for SigmaSpec {
    type Error = Error;
    fn try_from(kind: SigmaKind) -> Result<Self> {
        SigmaSpec::new(kind)
    }
}

impl From<SigmaSpec> for SigmaKind {
    fn from(s: SigmaSpec) -> Self {
        s.kind
    }
}

impl SigmaSpec {
    pub fn new(kind: SigmaKind) -> Result<Self> {
        let (lip, lower_lip) = match &kind {
            SigmaKind::Linear { lambda } => {
                finite("lambda", *lambda)?;
                (lambda.abs(), lambda.abs())
            }
            SigmaKind::SaturatingLinear { lambda, cap } => {
                finite("lambda", *lambda)?;
                if !(*cap > 0.0 && cap.is_finite()) {
                    return Err(Error::InvalidParameter(format!("cap {cap} must be positive")));
                }
                (lambda.abs(), 0.0)
            }
            SigmaKind::Custom { x, y } => {
                if x.len() != y.len() || x.len() < 2 {
                    return Err(Error::InvalidParameter("custom sigma needs at least two knots".into()));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(y).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("custom sigma knots must be finite with increasing x".into()));
                }
                let slopes: Vec<f64> = (0..x.len() - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
                let lip = slopes.iter().fold(0.0f64, |a, s| a.max(s.abs()));
                let at0 = interp(x, y, &slopes, 0.0);
                if at0 != 0.0 {
                    return Err(Error::InvalidParameter(format!("custom sigma has σ(0) = {at0}, must vanish")));
                }
                // |σ(x)/x| is monotone on each linear piece away from 0, so its
                // infimum is attained at a knot, at ±∞ or at 0⁺/0⁻
                let mut lower = slopes[0].abs().min(slopes[slopes.len() - 1].abs());
                for (xi, yi) in x.iter().zip(y) {
                    if *xi != 0.0 {
                        lower = lower.min((yi / xi).abs());
                    }
                }
                let piece = |z: f64| {
                    let k = x.partition_point(|&v| v <= z).clamp(1, x.len() - 1) - 1;
                    slopes[k].abs()
                };
                lower = lower.min(piece(1e-300)).min(piece(-1e-300));
                (lip, lower)
            }
        };
        Ok(Self { kind, lip, lower_lip })
    }

    pub fn linear(lambda: f64) -> Self {
        Self::new(SigmaKind::Linear { lambda }).expect("finite lambda")
    }

    pub fn kind(&self) -> &SigmaKind {
        &self.kind
    }

    /// Lipschitz constant Lip_σ.
    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// L_σ = inf |σ(u)/u|.
    pub fn lower_lip(&self) -> f64 {
        self.lower_lip
    }

    /// λ for σ(u) = λu, `None` otherwise.
    pub fn linear_coefficient(&self) -> Option<f64> {
        match self.kind {
            SigmaKind::Linear { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lip == 0.0
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            SigmaKind::Linear { lambda } => lambda * u,
            SigmaKind::SaturatingLinear { lambda, cap } => lambda * cap * (u / cap).tanh(),
            SigmaKind::Custom { x, y } => {
                let k = x.partition_point(|&v| v <= u).clamp(1, x.len() - 1) - 1;
                let s = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
                y[k] + s * (u - x[k])
            }
        }
    }
}

fn interp(x: &[f64], y: &[f64], slopes: &[f64], u: f64) -> f64 {
    let k = x.partition_point(|&v| v <= u).clamp(1, x.len() - 1) - 1;
    y[k] + slopes[k] * (u - x[k])
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        let l = SigmaSpec::linear(-2.0);
        assert_eq!((l.lip(), l.lower_lip(), l.eval(1.5)), (2.0, 2.0, -3.0));
        let s = SigmaSpec::new(SigmaKind::SaturatingLinear { lambda: 1.0, cap: 2.0 }).unwrap();
        assert_eq!((s.lip(), s.lower_lip(), s.eval(0.0)), (1.0, 0.0, 0.0));
        let c = SigmaSpec::new(SigmaKind::Custom { x: vec![-1.0, 0.0, 2.0], y: vec![-0.5, 0.0, 4.0] }).unwrap();
        assert_eq!(c.lip(), 2.0);
        assert_eq!(c.lower_lip(), 0.5);
        assert_eq!(c.eval(3.0), 6.0);
        assert!(SigmaSpec::new(SigmaKind::Custom { x: vec![-1.0, 1.0], y: vec![0.0, 1.0] }).is_err());
    }

    #[test]
    fn serde_shape() {
        let s: SigmaSpec = serde_json::from_str(r#"{"kind":"linear","lambda":1.0}"#).unwrap();
        assert_eq!(s.linear_coefficient(), Some(1.0));
        assert!(serde_json::to_string(&s).unwrap().contains(r#""kind":"linear""#));
    }
}
