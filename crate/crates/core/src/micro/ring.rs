use crate::error::{Error, Result};
use crate::model::ControlParams;

/// Ring road built from initial speeds with every vehicle on its desired spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct RingLayout {
    /// Ring circumference [m].
    pub length: f64,
    /// Positions front to back; the last vehicle sits at 0.
    pub positions: Vec<f64>,
    /// `spacings[i]` is the gap from vehicle `i` to vehicle `i - 1` (vehicle 0
    /// follows the last one across the wrap).
    pub spacings: Vec<f64>,
}

pub fn ring_setup(n: usize, params: &ControlParams, speeds: &[f64]) -> Result<RingLayout> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "a ring needs at least 2 vehicles, got {n}"
        )));
    }
    if speeds.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} initial speeds, got {}",
            speeds.len()
        )));
    }
    let spacings: Vec<f64> = speeds.iter().map(|&v| params.desired_spacing(v)).collect();
    if let Some(s) = spacings.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "non-positive ring spacing {s}"
        )));
    }
    let length = spacings.iter().sum();
    let mut positions = vec![0.0; n];
    for i in (0..n - 1).rev() {
        positions[i] = positions[i + 1] + spacings[i + 1];
    }
    Ok(RingLayout {
        length,
        positions,
        spacings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_and_perturbed_rings() {
        let p = ControlParams::default();
        let ring = ring_setup(4, &p, &[10.0; 4]).unwrap();
        assert_abs_diff_eq!(ring.length, 68.0, epsilon = 1e-12);
        assert_eq!(ring.positions, vec![51.0, 34.0, 17.0, 0.0]);

        let ring = ring_setup(4, &p, &[10.0, 11.0, 10.0, 9.0]).unwrap();
        assert_abs_diff_eq!(ring.length, 4.0 * 5.0 + 1.2 * 40.0, epsilon = 1e-12);
        let wrap_gap = ring.positions[3] + ring.length - ring.positions[0];
        assert_abs_diff_eq!(wrap_gap, ring.spacings[0], epsilon = 1e-12);
        for i in 1..4 {
            assert_abs_diff_eq!(
                ring.positions[i - 1] - ring.positions[i],
                ring.spacings[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn rejects_single_vehicle() {
        assert!(ring_setup(1, &ControlParams::default(), &[10.0]).is_err());
        assert!(ring_setup(3, &ControlParams::default(), &[10.0]).is_err());
    }
}
