//! Uniform linear array responses and the fixed analog RF beamformers built
//! from them.
//!
//! A grid combiner stacks unit-norm ULA steering vectors pointing at
//! `-pi/2 + pi * i / n_rf`, `i = 0..n_rf`. Every entry therefore has modulus
//! `1/sqrt(N)`. The identity combiner models fully-digital beamforming.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Geometry of a uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlaSpec {
    num_elements: usize,
    /// Element spacing in carrier wavelengths.
    element_spacing: f64,
}

impl UlaSpec {
    pub fn new(num_elements: usize, element_spacing: f64) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::InvalidArgument("ULA needs at least one element".into()));
        }
        if !(element_spacing.is_finite() && element_spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {element_spacing}"
            )));
        }
        Ok(Self {
            num_elements,
            element_spacing,
        })
    }

    /// Half-wavelength array.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn element_spacing(&self) -> f64 {
        self.element_spacing
    }
}

/// Unit-norm array response; element `m` is `exp(-j 2 pi d m sin(theta)) / sqrt(N)`.
pub fn ula_response(spec: &UlaSpec, theta: f64) -> Result<CVector> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite steering angle {theta}")));
    }
    if theta.abs() > FRAC_PI_2 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "steering angle {theta} outside [-pi/2, pi/2]"
        )));
    }
    let n = spec.num_elements;
    let scale = 1.0 / (n as f64).sqrt();
    let step = -2.0 * PI * spec.element_spacing * theta.sin();
    Ok(CVector::from_fn(n, |m, _| {
        Complex64::from_polar(scale, step * m as f64)
    }))
}

/// Uniform angle grid `-pi/2 + pi * i / n_rf` for `i = 0..n_rf`.
pub fn build_angle_grid(n_rf: usize) -> Result<Vec<f64>> {
    if n_rf == 0 {
        return Err(Error::InvalidArgument("angle grid needs at least one point".into()));
    }
    Ok((0..n_rf)
        .map(|i| -FRAC_PI_2 + PI * i as f64 / n_rf as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerMode {
    /// Columns are steering vectors on the uniform angle grid.
    Grid,
    /// Fully-digital front end: the analog stage is the identity.
    Identity,
}

/// Fixed analog RF beamforming matrix (`N x N_RF`).
#[derive(Debug, Clone)]
pub struct AnalogCombiner {
    matrix: CMatrix,
    angle_grid: Vec<f64>,
    mode: CombinerMode,
}

impl AnalogCombiner {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Grid angles; empty for the identity combiner.
    pub fn angle_grid(&self) -> &[f64] {
        &self.angle_grid
    }

    pub fn mode(&self) -> CombinerMode {
        self.mode
    }

    pub fn n_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_rf(&self) -> usize {
        self.matrix.ncols()
    }

    /// `D^H D`, the RF-domain noise covariance shape.
    pub fn gram(&self) -> CMatrix {
        self.matrix.adjoint() * &self.matrix
    }

    /// `trace(D D^H)`.
    pub fn power_trace(&self) -> f64 {
        self.matrix.norm_squared()
    }
}

/// Build the analog combiner for an `n_antennas`-element half-wavelength ULA.
/// Identity mode ignores `n_rf` and uses `n_rf = n_antennas`.
pub fn build_analog_combiner(
    n_antennas: usize,
    n_rf: usize,
    mode: CombinerMode,
) -> Result<AnalogCombiner> {
    let spec = UlaSpec::half_wavelength(n_antennas)?;
    match mode {
        CombinerMode::Identity => Ok(AnalogCombiner {
            matrix: CMatrix::identity(n_antennas, n_antennas),
            angle_grid: Vec::new(),
            mode,
        }),
        CombinerMode::Grid => {
            if n_rf > n_antennas {
                return Err(Error::InvalidArgument(format!(
                    "{n_rf} RF chains exceed {n_antennas} antennas"
                )));
            }
            let angle_grid = build_angle_grid(n_rf)?;
            let columns = angle_grid
                .iter()
                .map(|&theta| ula_response(&spec, theta))
                .collect::<Result<Vec<_>>>()?;
            Ok(AnalogCombiner {
                matrix: CMatrix::from_columns(&columns),
                angle_grid,
                mode,
            })
        }
    }
}
