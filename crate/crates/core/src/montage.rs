//! 2-D scalp positions for the 32-channel 10-20 montage.
//!
//! Azimuthal projection with the nose at `+y`, right ear at `+x`, `Cz` at the
//! origin, and the equator (`Fpz`–`T7`–`Oz`) at radius 1. Inferior sites
//! (`TP9`, `PO9`, …) fall slightly outside the unit circle.

use crate::error::{Error, Result};

/// Channel order used by the synthetic generator.
pub const STANDARD_32: [&str; 32] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6", "T7", "C3", "Cz", "C4", "T8", "TP9",
    "CP5", "CP1", "CP2", "CP6", "TP10", "P7", "P3", "Pz", "P4", "P8", "PO9", "O1", "Oz", "O2", "PO10",
];

pub const EOG_CHANNELS: [&str; 2] = ["HEOG", "VEOG"];

// (name, azimuth in degrees clockwise from the nose, radius)
const POLAR: [(&str, f64, f64); 34] = [
    ("Fp1", -18.0, 1.0),
    ("Fp2", 18.0, 1.0),
    ("F7", -54.0, 1.0),
    ("F3", -39.0, 0.667),
    ("Fz", 0.0, 0.5),
    ("F4", 39.0, 0.667),
    ("F8", 54.0, 1.0),
    ("FC5", -69.0, 0.856),
    ("FC1", -45.0, 0.356),
    ("FC2", 45.0, 0.356),
    ("FC6", 69.0, 0.856),
    ("T7", -90.0, 1.0),
    ("C3", -90.0, 0.5),
    ("Cz", 0.0, 0.0),
    ("C4", 90.0, 0.5),
    ("T8", 90.0, 1.0),
    ("TP9", -108.0, 1.25),
    ("CP5", -111.0, 0.856),
    ("CP1", -135.0, 0.356),
    ("CP2", 135.0, 0.356),
    ("CP6", 111.0, 0.856),
    ("TP10", 108.0, 1.25),
    ("P7", -126.0, 1.0),
    ("P3", -141.0, 0.667),
    ("Pz", 180.0, 0.5),
    ("P4", 141.0, 0.667),
    ("P8", 126.0, 1.0),
    ("PO9", -144.0, 1.24),
    ("O1", -162.0, 1.0),
    ("Oz", 180.0, 1.0),
    ("O2", 162.0, 1.0),
    ("PO10", 144.0, 1.24),
    ("Fpz", 0.0, 1.0),
    ("FCz", 0.0, 0.25),
];

/// Position of a named site, case-insensitive.
pub fn position(name: &str) -> Option<(f64, f64)> {
    POLAR
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, az, r)| {
            let a = az.to_radians();
            (r * a.sin(), r * a.cos())
        })
}

/// Positions for every channel, or an error listing the unknown ones.
pub fn positions(channels: &[String]) -> Result<Vec<(f64, f64)>> {
    let missing: Vec<&str> = channels
        .iter()
        .filter(|c| position(c).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Parameter(format!("no scalp position for channels: {}", missing.join(", "))));
    }
    Ok(channels.iter().filter_map(|c| position(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_geometry() {
        let (x, y) = position("Cz").unwrap();
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
        let (x, y) = position("pz").unwrap();
        assert!(x.abs() < 1e-12 && (y + 0.5).abs() < 1e-12);
        let (l, _) = position("C3").unwrap();
        let (r, _) = position("C4").unwrap();
        assert!((l + r).abs() < 1e-12 && r > 0.0);
        for name in STANDARD_32 {
            assert!(position(name).is_some(), "{name}");
        }
    }

    #[test]
    fn missing_positions_are_listed() {
        let err = positions(&["Cz".into(), "HEOG".into(), "X1".into()]).unwrap_err();
        assert!(err.to_string().contains("HEOG, X1"));
    }
}
