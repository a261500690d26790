//! Time-varying download/upload limits on per-step water-height changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::ChannelGeometry;

/// Lower clamp matching the smallest upload limit used in the reference
/// experiments.
pub const DEFAULT_WAVEFORM_FLOOR: f64 = 0.6825;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("profile evaluated to non-positive value {value} for channel {channel} at step {k}")]
    NonPositive { channel: usize, k: usize, value: f64 },
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("piecewise profile does not cover step {0}")]
    Uncovered(usize),
    #[error("override references channel {channel}, but the network has {n} channels")]
    ChannelOutOfRange { channel: usize, n: usize },
}

fn default_amplitude() -> f64 {
    7.0
}
fn default_decay() -> f64 {
    0.95
}
fn default_period() -> f64 {
    10.0
}

/// A scalar limit as a function of the step index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileKind {
    Constant {
        value: f64,
    },
    /// `amplitude (1 - decay^(k+1)) (1 - decay^(k+1) |cos(k / period)|)`,
    /// optionally clamped from below by `floor`.
    Waveform {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_decay")]
        decay: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        floor: Option<f64>,
    },
    Piecewise {
        segments: Vec<Segment>,
    },
}

/// Half-open step range `[start, end)`; `end = None` runs forever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    pub profile: ProfileKind,
}

impl ProfileKind {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    /// The reference upload waveform without clamping.
    pub fn waveform_literal() -> Self {
        Self::Waveform {
            amplitude: default_amplitude(),
            decay: default_decay(),
            period: default_period(),
            floor: None,
        }
    }

    pub fn waveform_clamped(floor: f64) -> Self {
        Self::Waveform {
            amplitude: default_amplitude(),
            decay: default_decay(),
            period: default_period(),
            floor: Some(floor),
        }
    }

    /// `before` for `k < start`, `after` from `start` on.
    pub fn switch_at(start: usize, before: ProfileKind, after: ProfileKind) -> Self {
        Self::Piecewise {
            segments: vec![
                Segment {
                    start: 0,
                    end: Some(start),
                    profile: before,
                },
                Segment {
                    start,
                    end: None,
                    profile: after,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: String| Err(ProfileError::Invalid(m));
        match self {
            Self::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return bad(format!("constant value must be positive and finite, got {value}"));
                }
            }
            Self::Waveform {
                amplitude,
                decay,
                period,
                floor,
            } => {
                if !(*amplitude > 0.0 && amplitude.is_finite()) {
                    return bad(format!("waveform amplitude must be positive, got {amplitude}"));
                }
                if !(*decay > 0.0 && *decay < 1.0) {
                    return bad(format!("waveform decay must lie in (0, 1), got {decay}"));
                }
                if !(*period > 0.0 && period.is_finite()) {
                    return bad(format!("waveform period must be positive, got {period}"));
                }
                if let Some(f) = floor {
                    if !(*f >= 0.0 && f.is_finite()) {
                        return bad(format!("waveform floor must be non-negative, got {f}"));
                    }
                }
            }
            Self::Piecewise { segments } => {
                let mut next = 0;
                for (idx, seg) in segments.iter().enumerate() {
                    if seg.start != next {
                        return bad(format!("segment {} starts at {} but {} was expected", idx + 1, seg.start, next));
                    }
                    match seg.end {
                        Some(end) if end <= seg.start => {
                            return bad(format!("segment {} is empty", idx + 1));
                        }
                        Some(end) => next = end,
                        None if idx + 1 != segments.len() => {
                            return bad(format!("segment {} is unbounded but not last", idx + 1));
                        }
                        None => next = usize::MAX,
                    }
                    seg.profile.validate()?;
                }
                if next != usize::MAX {
                    return bad("last segment must be unbounded".into());
                }
            }
        }
        Ok(())
    }

    /// Raw value at step `k`; positivity is checked by the callers that know
    /// the channel.
    pub fn value_at(&self, k: usize) -> Result<f64, ProfileError> {
        match self {
            Self::Constant { value } => Ok(*value),
            Self::Waveform {
                amplitude,
                decay,
                period,
                floor,
            } => {
                let g = decay.powi(k as i32 + 1);
                let raw = amplitude * (1.0 - g) * (1.0 - g * (k as f64 / period).cos().abs());
                Ok(floor.map_or(raw, |f| raw.max(f)))
            }
            Self::Piecewise { segments } => segments
                .iter()
                .find(|s| s.start <= k && s.end.is_none_or(|e| k < e))
                .ok_or(ProfileError::Uncovered(k))
                .and_then(|s| s.profile.value_at(k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelOverride {
    /// 1-based channel ids.
    pub channels: Vec<usize>,
    pub profile: ProfileKind,
}

/// Per-channel assignment: a default profile plus overrides (later
/// overrides win).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintProfile {
    pub default: ProfileKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<ChannelOverride>,
}

impl From<ProfileKind> for ConstraintProfile {
    fn from(default: ProfileKind) -> Self {
        Self {
            default,
            overrides: Vec::new(),
        }
    }
}

impl ConstraintProfile {
    pub fn uniform(kind: ProfileKind) -> Self {
        kind.into()
    }

    pub fn validate(&self, n: usize) -> Result<(), ProfileError> {
        self.default.validate()?;
        for o in &self.overrides {
            if let Some(&c) = o.channels.iter().find(|&&c| c == 0 || c > n) {
                return Err(ProfileError::ChannelOutOfRange { channel: c, n });
            }
            o.profile.validate()?;
        }
        Ok(())
    }

    pub fn profile_for(&self, channel: usize) -> &ProfileKind {
        self.overrides
            .iter()
            .rev()
            .find(|o| o.channels.contains(&(channel + 1)))
            .map_or(&self.default, |o| &o.profile)
    }

    /// Limit for 0-based `channel` at step `k`; always strictly positive.
    pub fn eval(&self, channel: usize, k: usize) -> Result<f64, ProfileError> {
        let value = self.profile_for(channel).value_at(k)?;
        if !(value > 0.0) {
            return Err(ProfileError::NonPositive {
                channel: channel + 1,
                k,
                value,
            });
        }
        Ok(value)
    }

    /// Replaces every channel's profile by `fault` from step `start` on.
    pub fn with_fault(&self, start: usize, fault: &ProfileKind) -> Self {
        Self {
            default: ProfileKind::switch_at(start, self.default.clone(), fault.clone()),
            overrides: self
                .overrides
                .iter()
                .map(|o| ChannelOverride {
                    channels: o.channels.clone(),
                    profile: ProfileKind::switch_at(start, o.profile.clone(), fault.clone()),
                })
                .collect(),
        }
    }
}

/// Smallest limit over all channels and both directions at step `k`.
pub fn network_min(
    download: &ConstraintProfile,
    upload: &ConstraintProfile,
    n: usize,
    k: usize,
) -> Result<f64, ProfileError> {
    let mut c = f64::INFINITY;
    for i in 0..n {
        c = c.min(download.eval(i, k)?).min(upload.eval(i, k)?);
    }
    Ok(c)
}

/// Download and upload limits for an n-channel network, in height units
/// per step. Profiles expressed in flow units are divided by each channel's
/// flow factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelLimits {
    n: usize,
    download: ConstraintProfile,
    upload: ConstraintProfile,
    divisors: Option<Vec<f64>>,
}

impl ChannelLimits {
    pub fn new(n: usize, download: ConstraintProfile, upload: ConstraintProfile) -> Result<Self, ProfileError> {
        download.validate(n)?;
        upload.validate(n)?;
        Ok(Self {
            n,
            download,
            upload,
            divisors: None,
        })
    }

    pub fn uniform(n: usize, download: ProfileKind, upload: ProfileKind) -> Result<Self, ProfileError> {
        Self::new(n, download.into(), upload.into())
    }

    /// Interprets the profiles as volumetric flow limits.
    pub fn from_flows(
        download: ConstraintProfile,
        upload: ConstraintProfile,
        geometry: &[ChannelGeometry],
    ) -> Result<Self, ProfileError> {
        let mut limits = Self::new(geometry.len(), download, upload)?;
        limits.divisors = Some(geometry.iter().map(ChannelGeometry::flow_factor).collect());
        Ok(limits)
    }

    pub fn channel_count(&self) -> usize {
        self.n
    }

    pub fn download_profile(&self) -> &ConstraintProfile {
        &self.download
    }

    pub fn upload_profile(&self) -> &ConstraintProfile {
        &self.upload
    }

    fn scale(&self, i: usize, v: f64) -> f64 {
        self.divisors.as_ref().map_or(v, |d| v / d[i])
    }

    pub fn download(&self, i: usize, k: usize) -> Result<f64, ProfileError> {
        Ok(self.scale(i, self.download.eval(i, k)?))
    }

    pub fn upload(&self, i: usize, k: usize) -> Result<f64, ProfileError> {
        Ok(self.scale(i, self.upload.eval(i, k)?))
    }

    pub fn min_download(&self, k: usize) -> Result<f64, ProfileError> {
        (0..self.n).try_fold(f64::INFINITY, |m, i| Ok(m.min(self.download(i, k)?)))
    }

    pub fn min_upload(&self, k: usize) -> Result<f64, ProfileError> {
        (0..self.n).try_fold(f64::INFINITY, |m, i| Ok(m.min(self.upload(i, k)?)))
    }

    pub fn network_min(&self, k: usize) -> Result<f64, ProfileError> {
        Ok(self.min_download(k)?.min(self.min_upload(k)?))
    }

    /// Smallest network limit over steps `0..=k_max`.
    pub fn horizon_min(&self, k_max: usize) -> Result<f64, ProfileError> {
        (0..=k_max).try_fold(f64::INFINITY, |m, k| Ok(m.min(self.network_min(k)?)))
    }

    pub fn with_fault(&self, start: usize, download: &ProfileKind, upload: &ProfileKind) -> Result<Self, ProfileError> {
        download.validate()?;
        upload.validate()?;
        Ok(Self {
            n: self.n,
            download: self.download.with_fault(start, download),
            upload: self.upload.with_fault(start, upload),
            divisors: self.divisors.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_profile() {
        let p = ConstraintProfile::uniform(ProfileKind::constant(5.0));
        assert_eq!(p.eval(0, 0).unwrap(), 5.0);
        assert_eq!(p.eval(3, 1000).unwrap(), 5.0);
    }

    #[test]
    fn literal_waveform_at_zero() {
        let p = ConstraintProfile::uniform(ProfileKind::waveform_literal());
        assert_abs_diff_eq!(p.eval(0, 0).unwrap(), 7.0 * 0.05 * 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval(0, 0).unwrap(), 0.0175, epsilon = 1e-15);
        let clamped = ConstraintProfile::uniform(ProfileKind::waveform_clamped(DEFAULT_WAVEFORM_FLOOR));
        assert_eq!(clamped.eval(0, 0).unwrap(), 0.6825);
        // k = 10: 7 (1 - .95^11)(1 - .95^11 |cos 1|)
        let g = 0.95f64.powi(11);
        let expected = 7.0 * (1.0 - g) * (1.0 - g * 1.0f64.cos().abs());
        assert_abs_diff_eq!(clamped.eval(0, 10).unwrap(), expected, epsilon = 1e-14);
        assert!(expected > 0.6825);
    }

    #[test]
    fn literal_waveform_stays_positive() {
        let p = ConstraintProfile::uniform(ProfileKind::waveform_literal());
        for k in 0..5000 {
            assert!(p.eval(0, k).unwrap() > 0.0);
        }
    }

    #[test]
    fn piecewise_fault() {
        let p = ConstraintProfile::uniform(ProfileKind::switch_at(
            30,
            ProfileKind::constant(5.0),
            ProfileKind::constant(1.0),
        ));
        p.validate(4).unwrap();
        assert_eq!(p.eval(0, 29).unwrap(), 5.0);
        assert_eq!(p.eval(0, 30).unwrap(), 1.0);
        let faulted = ConstraintProfile::uniform(ProfileKind::constant(5.0)).with_fault(30, &ProfileKind::constant(1.0));
        assert_eq!(faulted, p);
    }

    #[test]
    fn network_minimum() {
        let d = ConstraintProfile::uniform(ProfileKind::constant(5.0));
        let u = ConstraintProfile::uniform(ProfileKind::constant(0.6825));
        for k in 0..50 {
            assert_eq!(network_min(&d, &u, 6, k).unwrap(), 0.6825);
        }
        let per_channel = |vals: [f64; 3]| ConstraintProfile {
            default: ProfileKind::constant(100.0),
            overrides: vals
                .iter()
                .enumerate()
                .map(|(i, &v)| ChannelOverride {
                    channels: vec![i + 1],
                    profile: ProfileKind::constant(v),
                })
                .collect(),
        };
        let d = per_channel([3.0, 5.0, 7.0]);
        let u = per_channel([4.0, 2.0, 9.0]);
        assert_eq!(network_min(&d, &u, 3, 0).unwrap(), 2.0);
        let limits = ChannelLimits::new(3, d, u).unwrap();
        assert_eq!(limits.min_download(0).unwrap(), 3.0);
        assert_eq!(limits.min_upload(0).unwrap(), 2.0);
        assert_eq!(limits.network_min(7).unwrap(), 2.0);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(ProfileKind::constant(0.0).validate().is_err());
        assert!(ProfileKind::constant(-1.0).validate().is_err());
        let gap = ProfileKind::Piecewise {
            segments: vec![
                Segment { start: 0, end: Some(5), profile: ProfileKind::constant(1.0) },
                Segment { start: 6, end: None, profile: ProfileKind::constant(1.0) },
            ],
        };
        assert!(gap.validate().is_err());
        let open = ProfileKind::Piecewise {
            segments: vec![Segment { start: 0, end: Some(5), profile: ProfileKind::constant(1.0) }],
        };
        assert!(open.validate().is_err());
        assert!(matches!(open.value_at(5), Err(ProfileError::Uncovered(5))));
        let p = ConstraintProfile {
            default: ProfileKind::constant(1.0),
            overrides: vec![ChannelOverride { channels: vec![4], profile: ProfileKind::constant(2.0) }],
        };
        assert!(matches!(p.validate(3), Err(ProfileError::ChannelOutOfRange { channel: 4, n: 3 })));
        // an unvalidated negative constant is caught at evaluation
        let neg = ConstraintProfile::uniform(ProfileKind::Constant { value: -2.0 });
        assert!(matches!(neg.eval(0, 0), Err(ProfileError::NonPositive { .. })));
    }

    #[test]
    fn flow_units_divide_by_flow_factor() {
        use crate::geometry::{ChannelGeometry, ChannelShape};
        let g = ChannelGeometry::new(ChannelShape { length: 10.0, width: 3.0, theta: 0.0, h_zero: 0.5, h_section: 1.0 })
            .unwrap();
        let limits = ChannelLimits::from_flows(
            ProfileKind::constant(60.0).into(),
            ProfileKind::constant(30.0).into(),
            &[g, g],
        )
        .unwrap();
        assert_eq!(limits.download(1, 0).unwrap(), 2.0);
        assert_eq!(limits.upload(0, 0).unwrap(), 1.0);
    }

    #[test]
    fn profiles_are_pure() {
        let p = ConstraintProfile::uniform(ProfileKind::waveform_clamped(0.5));
        for k in 0..200 {
            assert_eq!(p.eval(2, k).unwrap().to_bits(), p.eval(2, k).unwrap().to_bits());
        }
    }
}
