//! Radial initial data descriptors, evaluated at the distance `|x|`.

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile parameter {name} = {value} is invalid: {reason}")]
    Parameter { name: &'static str, value: f64, reason: &'static str },
    #[error("table profile: {0}")]
    Table(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `height · exp(−((|x| − center)/width)²)`.
    Bump { center: f64, width: f64, height: f64 },
    /// `delta / (1 + |x|^{2/(p−1)})`.
    Corollary { delta: f64, p: f64 },
    /// `1` on `|x| ≤ radius`, else `0`.
    Indicator { radius: f64 },
    /// Piecewise linear through `(r, value)` pairs, constant past the ends.
    Table { points: Vec<(f64, f64)> },
}

impl Profile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |name, value, reason| Err(ProfileError::Parameter { name, value, reason });
        match *self {
            Profile::Bump { center, width, height } => {
                if !(center >= 0.0 && center.is_finite()) {
                    return bad("center", center, "must be finite and >= 0");
                }
                if !(width > 0.0 && width.is_finite()) {
                    return bad("width", width, "must be positive");
                }
                if !(height >= 0.0 && height.is_finite()) {
                    return bad("height", height, "must be finite and >= 0");
                }
            }
            Profile::Corollary { delta, p } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return bad("delta", delta, "must be finite and >= 0");
                }
                if !(p > 1.0 && p.is_finite()) {
                    return bad("p", p, "must exceed 1");
                }
            }
            Profile::Indicator { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return bad("radius", radius, "must be positive");
                }
            }
            Profile::Table { ref points } => {
                if points.is_empty() {
                    return Err(ProfileError::Table("no points".into()));
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(ProfileError::Table("radii must increase strictly".into()));
                }
                if points.iter().any(|(r, v)| !(r.is_finite() && *r >= 0.0 && v.is_finite() && *v >= 0.0)) {
                    return Err(ProfileError::Table("entries must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        match self {
            Profile::Bump { center, width, height } => {
                let z = (r - center) / width;
                height * (-z * z).exp()
            }
            Profile::Corollary { delta, p } => delta / (1.0 + r.powf(2.0 / (p - 1.0))),
            Profile::Indicator { radius } => {
                if r <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Table { points } => interpolate(points, r),
        }
    }

    /// Same shape with its amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Profile {
        match self {
            Profile::Bump { center, width, height } => Profile::Bump { center: *center, width: *width, height: height * factor },
            Profile::Corollary { delta, p } => Profile::Corollary { delta: delta * factor, p: *p },
            Profile::Table { points } => Profile::Table { points: points.iter().map(|(r, v)| (*r, v * factor)).collect() },
            // an indicator has no amplitude slot; scale through a table
            Profile::Indicator { radius } => Profile::Table {
                points: vec![(0.0, factor), (*radius, factor), (radius * (1.0 + 1e-12), 0.0)],
            },
        }
    }

    /// The amplitude parameter: height, delta, or 1.
    pub fn amplitude(&self) -> f64 {
        match self {
            Profile::Bump { height, .. } => *height,
            Profile::Corollary { delta, .. } => *delta,
            Profile::Indicator { .. } => 1.0,
            Profile::Table { points } => points.iter().map(|p| p.1).fold(0.0, f64::max),
        }
    }

    /// Reads `r,value` lines; `#` starts a comment.
    pub fn load_table(path: &Path) -> Result<Profile, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io { path: path.display().to_string(), source })?;
        let mut points = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| s.and_then(|s| s.parse::<f64>().ok());
            match (parse(parts.next()), parse(parts.next()), parts.next()) {
                (Some(r), Some(v), None) => points.push((r, v)),
                _ => return Err(ProfileError::Table(format!("line {}: expected 'r,value'", k + 1))),
            }
        }
        let profile = Profile::Table { points };
        profile.validate()?;
        Ok(profile)
    }
}

fn interpolate(points: &[(f64, f64)], r: f64) -> f64 {
    let k = points.partition_point(|(x, _)| *x <= r);
    if k == 0 {
        return points[0].1;
    }
    if k == points.len() {
        return points[k - 1].1;
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Bump { center, width, height } => write!(f, "bump({center},{width},{height})"),
            Profile::Corollary { delta, p } => write!(f, "corollary_profile({delta},{p})"),
            Profile::Indicator { radius } => write!(f, "indicator({radius})"),
            Profile::Table { points } => write!(f, "table({} points)", points.len()),
        }
    }
}
