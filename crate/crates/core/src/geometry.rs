//! Trapezoidal channel cross sections: volume/height conversion and the
//! translation of volumetric flow limits into water-height rate limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid channel geometry: {0}")]
    Invalid(String),
    #[error("height increment {value} below lower bound {bound}")]
    HeightBelowRange { value: f64, bound: f64 },
    #[error("height increment {value} above upper bound {bound}")]
    HeightAboveRange { value: f64, bound: f64 },
    #[error("volume increment {value} below lower bound {bound}")]
    VolumeBelowRange { value: f64, bound: f64 },
    #[error("volume increment {value} above upper bound {bound}")]
    VolumeAboveRange { value: f64, bound: f64 },
    #[error("a' + b'V = {0} is negative: volume inconsistent with geometry")]
    NegativeDiscriminant(f64),
    #[error("flow limit must be positive, got {0}")]
    NonPositiveFlow(f64),
}

/// User-facing geometry parameters, in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelShape {
    pub length: f64,
    pub width: f64,
    pub theta: f64,
    pub h_zero: f64,
    pub h_section: f64,
}

/// Validated geometry with the derived constants cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGeometry {
    shape: ChannelShape,
    tan_theta: f64,
    x_min: f64,
    x_max: f64,
    v_min: f64,
    v_max: f64,
    w: f64,
}

/// Constants of the inverse map x = sqrt(a' + b' V) - c'. Only defined for
/// sloped banks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ChannelGeometry {
    pub fn new(shape: ChannelShape) -> Result<Self, GeometryError> {
        let ChannelShape {
            length,
            width,
            theta,
            h_zero,
            h_section,
        } = shape;
        let bad = |m: &str| Err(GeometryError::Invalid(m.to_string()));
        if !(length > 0.0 && length.is_finite()) {
            return bad("length must be positive");
        }
        if !(width > 0.0 && width.is_finite()) {
            return bad("width must be positive");
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
            return bad("bank slope must lie in [0, pi/2)");
        }
        if !(h_section > 0.0 && h_section.is_finite()) {
            return bad("section height must be positive");
        }
        if !(0.0..=h_section).contains(&h_zero) {
            return bad("zero reference must lie in [0, section height]");
        }
        let tan_theta = theta.tan();
        // the section must not close up below the deepest admissible level
        if width - 2.0 * tan_theta * h_zero < -1e-12 * width {
            return bad("bottom width b - 2 tan(theta) h_Z must be non-negative");
        }
        let x_min = -h_zero;
        let x_max = h_section - h_zero;
        let vol = |x: f64| length * width * x + length * tan_theta * x * x;
        let v_max = vol(x_max);
        let w = if theta > 0.0 {
            let k = inverse_constants(length, width, tan_theta);
            2.0 / k.b * (k.a + k.b * v_max).sqrt()
        } else {
            length * width
        };
        Ok(Self {
            shape,
            tan_theta,
            x_min,
            x_max,
            v_min: vol(x_min),
            v_max,
            w,
        })
    }

    pub fn shape(&self) -> &ChannelShape {
        &self.shape
    }

    pub fn height_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn volume_range(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    /// Worst-case ratio between volume and height increments.
    pub fn flow_factor(&self) -> f64 {
        self.w
    }

    pub fn inverse_constants(&self) -> Option<InverseConstants> {
        (self.shape.theta > 0.0).then(|| inverse_constants(self.shape.length, self.shape.width, self.tan_theta))
    }

    pub fn volume_from_height(&self, x: f64) -> Result<f64, GeometryError> {
        if x < self.x_min {
            return Err(GeometryError::HeightBelowRange { value: x, bound: self.x_min });
        }
        if x > self.x_max {
            return Err(GeometryError::HeightAboveRange { value: x, bound: self.x_max });
        }
        Ok(self.shape.length * self.shape.width * x + self.shape.length * self.tan_theta * x * x)
    }

    pub fn height_from_volume(&self, v: f64) -> Result<f64, GeometryError> {
        if v < self.v_min {
            return Err(GeometryError::VolumeBelowRange { value: v, bound: self.v_min });
        }
        if v > self.v_max {
            return Err(GeometryError::VolumeAboveRange { value: v, bound: self.v_max });
        }
        match self.inverse_constants() {
            Some(k) => {
                let disc = k.a + k.b * v;
                if disc < 0.0 {
                    return Err(GeometryError::NegativeDiscriminant(disc));
                }
                // sqrt(a' + b'V) - c', rationalized against cancellation
                // when c' is large (nearly vertical banks)
                let root = disc.sqrt();
                Ok(k.b * v / (root + k.c))
            }
            None => Ok(v / (self.shape.length * self.shape.width)),
        }
    }

    /// Exact volume/height ratio between two admissible volumes.
    pub fn step_factor(&self, v_now: f64, v_next: f64) -> f64 {
        match self.inverse_constants() {
            Some(k) => ((k.a + k.b * v_next).sqrt() + (k.a + k.b * v_now).sqrt()) / k.b,
            None => self.shape.length * self.shape.width,
        }
    }

    /// Height-rate limits (c_D, c_U) guaranteeing the flow limits (C_D, C_U).
    pub fn flow_to_height_limits(&self, flow_down: f64, flow_up: f64) -> Result<(f64, f64), GeometryError> {
        Ok((self.height_limit(flow_down)?, self.height_limit(flow_up)?))
    }

    pub fn height_limit(&self, flow: f64) -> Result<f64, GeometryError> {
        if !(flow > 0.0) {
            return Err(GeometryError::NonPositiveFlow(flow));
        }
        Ok(flow / self.w)
    }
}

fn inverse_constants(length: f64, width: f64, tan_theta: f64) -> InverseConstants {
    let c = width / (2.0 * tan_theta);
    InverseConstants {
        a: c * c,
        b: 1.0 / (length * tan_theta),
        c,
    }
}
