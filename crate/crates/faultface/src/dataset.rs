//! Ingestion of labeled vibration records: manifest parsing, signal file
//! loading, fixed-length windowing, normalization, and class-balance
//! reporting.
//!
//! All operations here are pure given their inputs; batch callers may
//! fan them out across threads freely.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Samples per window; one window fills one 28x28 portrait exactly.
pub const WINDOW_LEN: usize = 784;

/// The six operating conditions, in the fixed index order 0..5 used by
/// every histogram, confusion matrix, and one-hot target in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorClass {
    Nominal,
    Ball,
    InnerRace,
    LoadCenter,
    LoadOpposite,
    LoadOrthogonal,
}

pub const CLASS_COUNT: usize = 6;

impl BehaviorClass {
    pub const ALL: [BehaviorClass; CLASS_COUNT] = [
        BehaviorClass::Nominal,
        BehaviorClass::Ball,
        BehaviorClass::InnerRace,
        BehaviorClass::LoadCenter,
        BehaviorClass::LoadOpposite,
        BehaviorClass::LoadOrthogonal,
    ];

    pub fn index(self) -> usize {
        match self {
            BehaviorClass::Nominal => 0,
            BehaviorClass::Ball => 1,
            BehaviorClass::InnerRace => 2,
            BehaviorClass::LoadCenter => 3,
            BehaviorClass::LoadOpposite => 4,
            BehaviorClass::LoadOrthogonal => 5,
        }
    }

    pub fn from_index(i: usize) -> Option<BehaviorClass> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Nominal => "Nominal",
            BehaviorClass::Ball => "Ball",
            BehaviorClass::InnerRace => "InnerRace",
            BehaviorClass::LoadCenter => "LoadCenter",
            BehaviorClass::LoadOpposite => "LoadOpposite",
            BehaviorClass::LoadOrthogonal => "LoadOrthogonal",
        }
    }

    pub fn parse(s: &str) -> Option<BehaviorClass> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which coupling the accelerometer sat on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BearingEnd {
    FanEnd,
    DriveEnd,
}

impl BearingEnd {
    pub fn name(self) -> &'static str {
        match self {
            BearingEnd::FanEnd => "FanEnd",
            BearingEnd::DriveEnd => "DriveEnd",
        }
    }

    pub fn parse(s: &str) -> Option<BearingEnd> {
        match s {
            "FanEnd" => Some(BearingEnd::FanEnd),
            "DriveEnd" => Some(BearingEnd::DriveEnd),
            _ => None,
        }
    }
}

impl fmt::Display for BearingEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A labeled, sampled vibration time series.
#[derive(Clone, Debug)]
pub struct VibrationRecord {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub label: BehaviorClass,
    pub bearing_end: BearingEnd,
}

impl VibrationRecord {
    pub fn new(
        id: impl Into<String>,
        samples: Vec<f64>,
        sample_rate: f64,
        label: BehaviorClass,
        bearing_end: BearingEnd,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("vibration record has no samples".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Shape(format!(
                "sample rate must be positive, got {}",
                sample_rate
            )));
        }
        Ok(VibrationRecord {
            id: id.into(),
            samples,
            sample_rate,
            label,
            bearing_end,
        })
    }
}

/// One 784-sample slice of a record, still unnormalized.
#[derive(Clone, Debug)]
pub struct Window {
    pub values: Vec<f64>,
    pub source_id: String,
    pub index: usize,
    pub label: BehaviorClass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: BehaviorClass,
    pub sample_rate: f64,
    pub bearing_end: BearingEnd,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

/// Parse a manifest: UTF-8, one `path,label,sample_rate,bearing_end`
/// record per line. Blank lines and `#` comments are skipped.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("manifest {}: {}", path.display(), e),
        ))
    })?;
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Manifest {
                line: line_no,
                reason: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let label = BehaviorClass::parse(fields[1]).ok_or_else(|| Error::UnknownLabel {
            line: line_no,
            token: fields[1].to_string(),
        })?;
        let sample_rate: f64 = fields[2].parse().map_err(|_| Error::Manifest {
            line: line_no,
            reason: format!("bad sample rate {:?}", fields[2]),
        })?;
        if !(sample_rate > 0.0) {
            return Err(Error::Manifest {
                line: line_no,
                reason: format!("sample rate must be positive, got {}", sample_rate),
            });
        }
        let bearing_end = BearingEnd::parse(fields[3]).ok_or_else(|| Error::Manifest {
            line: line_no,
            reason: format!("unknown bearing end {:?}", fields[3]),
        })?;
        let entry_path = PathBuf::from(fields[0]);
        if !seen.insert(entry_path.clone()) {
            return Err(Error::Manifest {
                line: line_no,
                reason: format!("duplicate path {:?}", fields[0]),
            });
        }
        entries.push(ManifestEntry {
            path: entry_path,
            label,
            sample_rate,
            bearing_end,
        });
    }
    Ok(Manifest { entries })
}

/// Load the signal file behind a manifest entry. Paths ending in `.f64`
/// are raw little-endian 64-bit floats; everything else is headerless
/// CSV with one value per line. Relative paths resolve against `base`.
pub fn load_record(entry: &ManifestEntry, base: &Path) -> Result<VibrationRecord> {
    let path = if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        base.join(&entry.path)
    };
    let samples = if path.extension().is_some_and(|e| e == "f64") {
        read_raw_f64(&path)?
    } else {
        read_csv_signal(&path)?
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    VibrationRecord::new(id, samples, entry.sample_rate, entry.label, entry.bearing_end)
}

fn read_csv_signal(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Format(format!(
            "{} line {}: not a number: {:?}",
            path.display(),
            i + 1,
            line
        )))?;
        out.push(v);
    }
    Ok(out)
}

fn read_raw_f64(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Cut a record into complete 784-sample windows starting at offsets
/// 0, stride, 2*stride, ... Records shorter than one window yield an
/// empty vector.
pub fn segment_record(record: &VibrationRecord, stride: usize) -> Vec<Window> {
    assert!(stride >= 1, "stride must be at least 1");
    let n = record.samples.len();
    if n < WINDOW_LEN {
        return Vec::new();
    }
    let count = (n - WINDOW_LEN) / stride + 1;
    (0..count)
        .map(|i| {
            let start = i * stride;
            Window {
                values: record.samples[start..start + WINDOW_LEN].to_vec(),
                source_id: record.id.clone(),
                index: i,
                label: record.label,
            }
        })
        .collect()
}

/// Min-max normalize a window to [0,1]. A flat window maps to constant
/// 0.5 so the output stays in range without a zero division.
pub fn normalize_window(window: &Window) -> Result<Vec<f64>> {
    normalize_values(&window.values)
}

pub fn normalize_values(values: &[f64]) -> Result<Vec<f64>> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "window sample".into(),
                index: i,
            });
        }
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.5; values.len()]);
    }
    let span = max - min;
    Ok(values.iter().map(|&v| (v - min) / span).collect())
}

/// Per-class record counts plus the max/min imbalance ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassHistogram {
    pub counts: [usize; CLASS_COUNT],
}

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// max count / min count; `None` when some class has no records.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        let max = *self.counts.iter().max().unwrap();
        let min = *self.counts.iter().min().unwrap();
        if min == 0 {
            None
        } else {
            Some(max as f64 / min as f64)
        }
    }
}

pub fn class_histogram(manifest: &Manifest) -> ClassHistogram {
    let mut counts = [0usize; CLASS_COUNT];
    for e in &manifest.entries {
        counts[e.label.index()] += 1;
    }
    ClassHistogram { counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn record(n: usize) -> VibrationRecord {
        VibrationRecord::new(
            "r0",
            (0..n).map(|i| (i as f64 * 0.01).sin()).collect(),
            12_000.0,
            BehaviorClass::Ball,
            BearingEnd::FanEnd,
        )
        .unwrap()
    }

    #[test]
    fn class_order_is_fixed() {
        for (i, c) in BehaviorClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(BehaviorClass::from_index(i), Some(*c));
            assert_eq!(BehaviorClass::parse(c.name()), Some(*c));
        }
        assert_eq!(BehaviorClass::parse("Foo"), None);
    }

    #[test]
    fn segment_exact_tiling() {
        let windows = segment_record(&record(1568), 784);
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].index, 0);
        assert_eq!(windows[1].index, 1);
        assert!(windows.iter().all(|w| w.label == BehaviorClass::Ball));
    }

    #[test]
    fn segment_boundary_single() {
        assert_eq!(segment_record(&record(784), 1).len(), 1);
    }

    #[test]
    fn segment_partial_windows_dropped() {
        // offsets o with o + 784 <= 1000 -> o in {0, 100, 200}
        let windows = segment_record(&record(1000), 100);
        assert_eq!(windows.len(), 3);
        let offsets: Vec<usize> = windows.iter().map(|w| w.index * 100).collect();
        assert_eq!(offsets, vec![0, 100, 200]);
    }

    #[test]
    fn segment_short_record_empty() {
        assert_eq!(segment_record(&record(500), 784).len(), 0);
    }

    #[test]
    fn normalize_degenerate_is_half() {
        let mut w = record(784);
        w.samples = vec![3.7; 784];
        let wins = segment_record(&w, 784);
        let norm = normalize_window(&wins[0]).unwrap();
        assert!(norm.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn normalize_affine_span() {
        let values: Vec<f64> = (0..784).map(|i| -2.0 + 4.0 * i as f64 / 783.0).collect();
        let w = Window {
            values,
            source_id: "s".into(),
            index: 0,
            label: BehaviorClass::Nominal,
        };
        let norm = normalize_window(&w).unwrap();
        assert!((norm[0] - 0.0).abs() < 1e-15);
        assert!((norm[783] - 1.0).abs() < 1e-15);
        // interior point maps affinely
        assert!((norm[100] - 100.0 / 783.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let mut w = record(784);
        w.samples[13] = f64::NAN;
        let wins = segment_record(&w, 784);
        let err = normalize_window(&wins[0]).unwrap_err();
        assert!(err.to_string().contains("13"), "{}", err);
    }

    #[test]
    fn normalize_idempotent() {
        let w = record(784);
        let wins = segment_record(&w, 784);
        let once = normalize_window(&wins[0]).unwrap();
        let again = normalize_values(&once).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn manifest_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "").unwrap();
        assert_eq!(load_manifest(&p).unwrap().entries.len(), 0);
    }

    #[test]
    fn manifest_114_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut f = fs::File::create(&p).unwrap();
        // CWRU-shaped: 4 nominal, 110 fault records across five classes.
        let faults = [
            (BehaviorClass::Ball, 28),
            (BehaviorClass::InnerRace, 28),
            (BehaviorClass::LoadCenter, 23),
            (BehaviorClass::LoadOpposite, 15),
            (BehaviorClass::LoadOrthogonal, 16),
        ];
        for i in 0..4 {
            writeln!(f, "nom{}.csv,Nominal,12000,FanEnd", i).unwrap();
        }
        for (class, n) in faults {
            for i in 0..n {
                writeln!(f, "{}{}.csv,{},12000,DriveEnd", class.name(), i, class.name()).unwrap();
            }
        }
        drop(f);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.entries.len(), 114);
        let h = class_histogram(&m);
        assert_eq!(h.counts[BehaviorClass::Nominal.index()], 4);
        assert_eq!(h.total(), 114);
        assert_eq!(h.imbalance_ratio(), Some(7.0));
    }

    #[test]
    fn manifest_unknown_label_names_line_and_token() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "a.csv,Nominal,12000,FanEnd\nb.csv,Foo,12000,FanEnd\n").unwrap();
        match load_manifest(&p).unwrap_err() {
            Error::UnknownLabel { line, token } => {
                assert_eq!(line, 2);
                assert_eq!(token, "Foo");
            }
            e => panic!("unexpected error {:?}", e),
        }
    }

    #[test]
    fn manifest_duplicate_path_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "a.csv,Nominal,12000,FanEnd\na.csv,Ball,12000,FanEnd\n").unwrap();
        assert!(load_manifest(&p).is_err());
    }

    #[test]
    fn empty_histogram() {
        let h = class_histogram(&Manifest::default());
        assert_eq!(h.counts, [0; 6]);
        assert_eq!(h.imbalance_ratio(), None);
    }

    #[test]
    fn histogram_matches_brute_force() {
        let mut entries = Vec::new();
        for i in 0..57 {
            entries.push(ManifestEntry {
                path: PathBuf::from(format!("f{}.csv", i)),
                label: BehaviorClass::from_index((i * 7 + 3) % 6).unwrap(),
                sample_rate: 12_000.0,
                bearing_end: BearingEnd::FanEnd,
            });
        }
        let manifest = Manifest { entries };
        let h = class_histogram(&manifest);
        for c in BehaviorClass::ALL {
            let brute = manifest.entries.iter().filter(|e| e.label == c).count();
            assert_eq!(h.counts[c.index()], brute);
        }
        assert_eq!(h.total(), 57);
    }

    #[test]
    fn raw_f64_signal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.f64");
        let values = [0.5f64, -1.25, 3.0e-3, 7.75];
        let mut bytes = Vec::new();
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&p, bytes).unwrap();
        let entry = ManifestEntry {
            path: p.clone(),
            label: BehaviorClass::Nominal,
            sample_rate: 48_000.0,
            bearing_end: BearingEnd::DriveEnd,
        };
        let rec = load_record(&entry, dir.path()).unwrap();
        assert_eq!(rec.samples, values);
        assert_eq!(rec.id, "sig");
    }

    #[test]
    fn csv_signal_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.csv");
        fs::write(&p, "0.5\n-1.25\n\n0.003\n").unwrap();
        let entry = ManifestEntry {
            path: PathBuf::from("sig.csv"),
            label: BehaviorClass::Ball,
            sample_rate: 12_000.0,
            bearing_end: BearingEnd::FanEnd,
        };
        let rec = load_record(&entry, dir.path()).unwrap();
        assert_eq!(rec.samples, vec![0.5, -1.25, 0.003]);
    }
}
