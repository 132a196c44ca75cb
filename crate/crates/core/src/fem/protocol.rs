//! Drive and measurement patterns.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How current pairs are chosen. Every scheme measures on adjacent electrode
/// pairs that do not touch a driven electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// Drives (k, k+1).
    Adjacent,
    /// Drives (k, k+offset).
    Across { offset: usize },
    /// Drives (k, c-k); pairs that come out adjacent or identical are rejected.
    Reflection { c: usize },
}

impl Scheme {
    pub fn tag(&self) -> String {
        match self {
            Scheme::Adjacent => "adjacent".into(),
            Scheme::Across { offset } => format!("across-{offset}"),
            Scheme::Reflection { c } => format!("reflection-{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePattern {
    pub source: usize,
    pub sink: usize,
    /// A
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub pattern: DrivePattern,
    /// (sense+, sense-) pairs; each reading is V(sense+) - V(sense-).
    pub measurements: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub scheme: Scheme,
    pub electrodes: usize,
    pub drives: Vec<Drive>,
}

impl Protocol {
    pub fn new(scheme: Scheme, electrodes: usize, current: f64) -> Result<Self> {
        let l = electrodes;
        if l < 4 {
            return Err(Error::invalid("protocols need at least 4 electrodes"));
        }
        if !(current > 0.0) || !current.is_finite() {
            return Err(Error::invalid("drive current must be > 0"));
        }
        let pairs: Vec<(usize, usize)> = (0..l)
            .map(|k| match scheme {
                Scheme::Adjacent => Ok((k, (k + 1) % l)),
                Scheme::Across { offset } => {
                    if offset == 0 || offset >= l {
                        return Err(Error::invalid(format!("across offset must lie in 1..{l}, got {offset}")));
                    }
                    Ok((k, (k + offset) % l))
                }
                Scheme::Reflection { c } => {
                    let sink = (c + l - k % l) % l;
                    let gap = (sink + l - k) % l;
                    if gap == 0 || gap == 1 || gap == l - 1 {
                        return Err(Error::invalid(format!(
                            "reflection constant {c} pairs electrode {k} with {sink}, which is not a separated pair"
                        )));
                    }
                    Ok((k, sink))
                }
            })
            .collect::<Result<_>>()?;
        let drives = pairs
            .into_iter()
            .map(|(source, sink)| {
                let measurements = (0..l)
                    .map(|m| (m, (m + 1) % l))
                    .filter(|&(a, b)| ![a, b].iter().any(|&e| e == source || e == sink))
                    .collect();
                Drive {
                    pattern: DrivePattern { source, sink, current },
                    measurements,
                }
            })
            .collect();
        Ok(Self {
            scheme,
            electrodes: l,
            drives,
        })
    }

    pub fn measurement_count(&self) -> usize {
        self.drives.iter().map(|d| d.measurements.len()).sum()
    }

    /// (drive index, sense+, sense-) for every row, in frame order.
    pub fn rows(&self) -> Vec<(usize, usize, usize)> {
        self.drives
            .iter()
            .enumerate()
            .flat_map(|(d, drive)| drive.measurements.iter().map(move |&(p, m)| (d, p, m)))
            .collect()
    }

    /// Canonical text form, stable across runs.
    pub fn canonical_text(&self) -> String {
        let mut s = format!("scheme={} electrodes={}\n", self.scheme.tag(), self.electrodes);
        for d in &self.drives {
            s.push_str(&format!(
                "drive {} {} {:e}:",
                d.pattern.source, d.pattern.sink, d.pattern.current
            ));
            for (p, m) in &d.measurements {
                s.push_str(&format!(" {p}-{m}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_counts() {
        assert_eq!(Protocol::new(Scheme::Adjacent, 16, 1e-3).unwrap().measurement_count(), 208);
        assert_eq!(Protocol::new(Scheme::Adjacent, 8, 1e-3).unwrap().measurement_count(), 40);
        let across = Protocol::new(Scheme::Across { offset: 11 }, 16, 1e-3).unwrap();
        assert_eq!(across.measurement_count(), 192);
        assert!(across.drives.iter().all(|d| d.measurements.len() == 12));
        for l in 4..40 {
            assert_eq!(Protocol::new(Scheme::Adjacent, l, 1.0).unwrap().measurement_count(), l * (l - 3));
        }
    }

    #[test]
    fn measurements_skip_driven_electrodes() {
        let p = Protocol::new(Scheme::Across { offset: 11 }, 16, 1e-3).unwrap();
        for d in &p.drives {
            for &(a, b) in &d.measurements {
                for e in [a, b] {
                    assert!(e != d.pattern.source && e != d.pattern.sink);
                }
            }
        }
        assert_eq!(p.drives[0].pattern.sink, 11);
        assert_eq!(p.drives[1].pattern.sink, 12);
    }

    #[test]
    fn reflection_with_adjacent_pairs_rejected() {
        // c = 12 pairs 6 with 6
        assert!(Protocol::new(Scheme::Reflection { c: 12 }, 16, 1e-3).is_err());
        assert!(Protocol::new(Scheme::Across { offset: 0 }, 16, 1e-3).is_err());
        assert!(Protocol::new(Scheme::Adjacent, 3, 1e-3).is_err());
    }

    #[test]
    fn hash_depends_on_content() {
        let a = Protocol::new(Scheme::Adjacent, 16, 1e-3).unwrap();
        let b = Protocol::new(Scheme::Adjacent, 16, 2e-3).unwrap();
        assert_eq!(a.hash(), Protocol::new(Scheme::Adjacent, 16, 1e-3).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
