//! Geodesic math, offline geocoding, correctness thresholding, and
//! evaluation metrics.
//!
//! All distances are great-circle (haversine) kilometres on the WGS84
//! mean Earth radius. Geocoding is fully offline: free-text location
//! answers are matched against a bundled gazetteer of named boxes, so
//! runs are deterministic and need no network.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometres (IUGG mean radius R1).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinate out of range or non-finite: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("not geocodable: {0:?}")]
    NotGeocodable(String),
    #[error("accuracy over an empty outcome list is undefined")]
    EmptyOutcomes,
    #[error("coverage/consistency need a non-empty {0} location set")]
    EmptyLocationSet(&'static str),
    #[error("gazetteer {path}, line {line}: {msg}")]
    Gazetteer {
        path: String,
        line: usize,
        msg: String,
    },
}

/// A WGS84 latitude/longitude point in degrees.
///
/// Construction validates bounds, so every `GeoPoint` in the system is
/// finite and within [-90, 90] x [-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite()
            || !lon.is_finite()
            || !(-90.0..=90.0).contains(&lat)
            || !(-180.0..=180.0).contains(&lon)
        {
            return Err(GeoError::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// An axis-aligned latitude/longitude box ("location interval").
///
/// Antimeridian-wrapping boxes are rejected at construction: desk-scale
/// gazetteers avoid them and failing loudly beats silently mis-measuring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoBox {
    south_west: GeoPoint,
    north_east: GeoPoint,
}

impl GeoBox {
    pub fn new(south_west: GeoPoint, north_east: GeoPoint) -> Result<Self, GeoError> {
        if south_west.lat > north_east.lat {
            return Err(GeoError::InvalidBox(format!(
                "south latitude {} exceeds north latitude {}",
                south_west.lat, north_east.lat
            )));
        }
        if south_west.lon > north_east.lon {
            return Err(GeoError::InvalidBox(format!(
                "west longitude {} exceeds east longitude {} (antimeridian wrapping unsupported)",
                south_west.lon, north_east.lon
            )));
        }
        Ok(Self {
            south_west,
            north_east,
        })
    }

    /// A degenerate box covering a single point.
    pub fn point(p: GeoPoint) -> Self {
        Self {
            south_west: p,
            north_east: p,
        }
    }

    pub fn south_west(&self) -> GeoPoint {
        self.south_west
    }

    pub fn north_east(&self) -> GeoPoint {
        self.north_east
    }

    pub fn intersects(&self, other: &GeoBox) -> bool {
        overlap(
            (self.south_west.lat, self.north_east.lat),
            (other.south_west.lat, other.north_east.lat),
        )
        .is_some()
            && overlap(
                (self.south_west.lon, self.north_east.lon),
                (other.south_west.lon, other.north_east.lon),
            )
            .is_some()
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// One named gazetteer location: a canonical name, its case-folded
/// match keys, and the box it denotes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub canonical_name: String,
    pub aliases: Vec<String>,
    #[serde(with = "box_as_swne")]
    pub bounds: GeoBox,
}

impl GazetteerEntry {
    /// Aliases are lower-cased on construction; duplicates within the
    /// entry are rejected.
    pub fn new(
        canonical_name: impl Into<String>,
        aliases: Vec<String>,
        bounds: GeoBox,
    ) -> Result<Self, GeoError> {
        let canonical_name = canonical_name.into();
        if canonical_name.is_empty() {
            return Err(GeoError::InvalidBox("empty canonical name".into()));
        }
        let aliases: Vec<String> = aliases.iter().map(|a| a.to_lowercase()).collect();
        for (i, a) in aliases.iter().enumerate() {
            if aliases[..i].contains(a) {
                return Err(GeoError::InvalidBox(format!(
                    "duplicate alias {a:?} in entry {canonical_name:?}"
                )));
            }
        }
        Ok(Self {
            canonical_name,
            aliases,
            bounds,
        })
    }
}

/// Serialize a GeoBox as `[south, west, north, east]` degrees.
pub(crate) mod box_as_swne {
    use super::{GeoBox, GeoPoint};
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &GeoBox, s: S) -> Result<S::Ok, S::Error> {
        let arr = [
            b.south_west().lat(),
            b.south_west().lon(),
            b.north_east().lat(),
            b.north_east().lon(),
        ];
        serde::Serialize::serialize(&arr, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GeoBox, D::Error> {
        let [s, w, n, e]: [f64; 4] = Deserialize::deserialize(d)?;
        let sw = GeoPoint::new(s, w).map_err(D::Error::custom)?;
        let ne = GeoPoint::new(n, e).map_err(D::Error::custom)?;
        GeoBox::new(sw, ne).map_err(D::Error::custom)
    }
}

/// Scoring record for one evaluated sample.
#[derive(Debug, Clone, Serialize)]
pub struct EvalOutcome {
    pub sample_id: String,
    /// Geodesic distance between prediction and truth; `INFINITY` when
    /// the prediction could not be geocoded at all.
    pub distance_km: f64,
    pub correct: bool,
}

/// Great-circle distance in kilometres between two points.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lon1) = (a.lat.to_radians(), a.lon.to_radians());
    let (lat2, lon2) = (b.lat.to_radians(), b.lon.to_radians());
    let sin_dlat = ((lat2 - lat1) / 2.0).sin();
    let sin_dlon = ((lon2 - lon1) / 2.0).sin();
    let h = sin_dlat * sin_dlat + lat1.cos() * lat2.cos() * sin_dlon * sin_dlon;
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Shortest distance in kilometres between two boxes; 0 when they
/// overlap.
///
/// For disjoint boxes the closest pair of points is built per axis:
/// facing edges where the intervals are disjoint, a shared coordinate
/// where they overlap. A shared latitude is clamped toward the equator
/// so the longitude arc is evaluated where it is shortest.
pub fn box_distance_km(a: &GeoBox, b: &GeoBox) -> f64 {
    if a.intersects(b) {
        return 0.0;
    }
    let (lat_a, lat_b) = match overlap(
        (a.south_west.lat, a.north_east.lat),
        (b.south_west.lat, b.north_east.lat),
    ) {
        Some((lo, hi)) => {
            let shared = 0.0f64.clamp(lo, hi);
            (shared, shared)
        }
        None if a.north_east.lat < b.south_west.lat => (a.north_east.lat, b.south_west.lat),
        None => (a.south_west.lat, b.north_east.lat),
    };
    let (lon_a, lon_b) = match overlap(
        (a.south_west.lon, a.north_east.lon),
        (b.south_west.lon, b.north_east.lon),
    ) {
        Some((lo, _)) => (lo, lo),
        None if a.north_east.lon < b.south_west.lon => (a.north_east.lon, b.south_west.lon),
        None => (a.south_west.lon, b.north_east.lon),
    };
    let pa = GeoPoint::new(lat_a, lon_a).expect("clamped coordinate stays valid");
    let pb = GeoPoint::new(lat_b, lon_b).expect("clamped coordinate stays valid");
    haversine_km(pa, pb)
}

/// Map free text to the gazetteer entry whose alias matches it, by
/// case-folded containment.
///
/// The longest matching alias wins (char count); ties keep the earliest
/// gazetteer entry. No match is `NotGeocodable`, which callers score as
/// an incorrect answer, never as non-participation.
pub fn geocode_entry<'a>(
    text: &str,
    gazetteer: &'a [GazetteerEntry],
) -> Result<&'a GazetteerEntry, GeoError> {
    let folded = text.to_lowercase();
    let mut best: Option<(usize, &GazetteerEntry)> = None;
    for entry in gazetteer {
        for alias in &entry.aliases {
            if !alias.is_empty() && folded.contains(alias.as_str()) {
                let len = alias.chars().count();
                if best.is_none_or(|(best_len, _)| len > best_len) {
                    best = Some((len, entry));
                }
            }
        }
    }
    best.map(|(_, e)| e)
        .ok_or_else(|| GeoError::NotGeocodable(text.to_string()))
}

/// Map free text to a gazetteer box; see [`geocode_entry`].
pub fn geocode(text: &str, gazetteer: &[GazetteerEntry]) -> Result<GeoBox, GeoError> {
    geocode_entry(text, gazetteer).map(|e| e.bounds)
}

/// Whether a predicted box is within `th_km` of the truth box.
pub fn is_correct(pred: &GeoBox, truth: &GeoBox, th_km: f64) -> bool {
    box_distance_km(pred, truth) <= th_km
}

/// Fraction of correct outcomes.
pub fn accuracy(outcomes: &[EvalOutcome]) -> Result<f64, GeoError> {
    if outcomes.is_empty() {
        return Err(GeoError::EmptyOutcomes);
    }
    let correct = outcomes.iter().filter(|o| o.correct).count();
    Ok(correct as f64 / outcomes.len() as f64)
}

/// Train/test location overlap percentages:
/// coverage = |train ∩ test| / |train| x 100,
/// consistency = |train ∩ test| / |test| x 100.
pub fn coverage_consistency(
    train_locs: &std::collections::BTreeSet<String>,
    test_locs: &std::collections::BTreeSet<String>,
) -> Result<(f64, f64), GeoError> {
    if train_locs.is_empty() {
        return Err(GeoError::EmptyLocationSet("train"));
    }
    if test_locs.is_empty() {
        return Err(GeoError::EmptyLocationSet("test"));
    }
    let inter = train_locs.intersection(test_locs).count();
    let coverage = 100.0 * inter as f64 / train_locs.len() as f64;
    let consistency = 100.0 * inter as f64 / test_locs.len() as f64;
    Ok((coverage, consistency))
}

/// Load a gazetteer from UTF-8 CSV with header
/// `canonical_name,aliases,south,west,north,east`; `aliases` is a
/// `|`-separated list.
pub fn load_gazetteer(path: &std::path::Path) -> Result<Vec<GazetteerEntry>, GeoError> {
    let fail = |line: usize, msg: String| GeoError::Gazetteer {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| fail(0, e.to_string()))?;
    let mut entries = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| fail(line, e.to_string()))?;
        if row.len() != 6 {
            return Err(fail(line, format!("expected 6 fields, got {}", row.len())));
        }
        let num = |i: usize| -> Result<f64, GeoError> {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| fail(line, format!("field {}: {e}", i + 1)))
        };
        let (s, w, n, e) = (num(2)?, num(3)?, num(4)?, num(5)?);
        let sw = GeoPoint::new(s, w).map_err(|e| fail(line, e.to_string()))?;
        let ne = GeoPoint::new(n, e).map_err(|e| fail(line, e.to_string()))?;
        let bounds = GeoBox::new(sw, ne).map_err(|e| fail(line, e.to_string()))?;
        let aliases = row[1]
            .split('|')
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty())
            .collect();
        entries.push(
            GazetteerEntry::new(row[0].trim(), aliases, bounds)
                .map_err(|e| fail(line, e.to_string()))?,
        );
    }
    Ok(entries)
}

/// Write a gazetteer in the same CSV dialect `load_gazetteer` reads.
pub fn save_gazetteer(
    path: &std::path::Path,
    entries: &[GazetteerEntry],
) -> Result<(), std::io::Error> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "canonical_name",
        "aliases",
        "south",
        "west",
        "north",
        "east",
    ])?;
    for e in entries {
        out.write_record([
            e.canonical_name.clone(),
            e.aliases.join("|"),
            e.bounds.south_west().lat().to_string(),
            e.bounds.south_west().lon().to_string(),
            e.bounds.north_east().lat().to_string(),
            e.bounds.north_east().lon().to_string(),
        ])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn bx(s: f64, w: f64, n: f64, e: f64) -> GeoBox {
        GeoBox::new(pt(s, w), pt(n, e)).unwrap()
    }

    const PARIS: (f64, f64) = (48.8566, 2.3522);
    const LONDON: (f64, f64) = (51.5074, -0.1278);

    #[test]
    fn haversine_identity_is_zero() {
        assert_eq!(
            haversine_km(pt(PARIS.0, PARIS.1), pt(PARIS.0, PARIS.1)),
            0.0
        );
    }

    #[test]
    fn haversine_paris_london() {
        // Cross-checked against an independent great-circle calculation
        // with R = 6371.0088: 343.5565 km.
        let d = haversine_km(pt(PARIS.0, PARIS.1), pt(LONDON.0, LONDON.1));
        assert!((d - 343.5565).abs() < 1.0, "got {d}");
    }

    #[test]
    fn haversine_half_circumference() {
        // pi * R = 20015.1144 km.
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - 20015.1144).abs() < 1.0, "got {d}");
    }

    #[test]
    fn point_validation_rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 181.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn box_rejects_antimeridian_wrap() {
        assert!(GeoBox::new(pt(0.0, 170.0), pt(1.0, -170.0)).is_err());
        assert!(GeoBox::new(pt(5.0, 0.0), pt(1.0, 1.0)).is_err());
    }

    #[test]
    fn box_distance_overlap_is_zero() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let b = bx(1.0, 1.0, 3.0, 3.0);
        assert_eq!(box_distance_km(&a, &b), 0.0);
        // Containment counts as overlap.
        let inner = bx(0.5, 0.5, 1.0, 1.0);
        assert_eq!(box_distance_km(&a, &inner), 0.0);
    }

    #[test]
    fn box_distance_degenerate_points_reduces_to_haversine() {
        let a = GeoBox::point(pt(PARIS.0, PARIS.1));
        let b = GeoBox::point(pt(LONDON.0, LONDON.1));
        let d = box_distance_km(&a, &b);
        assert!((d - 343.5565).abs() < 1.0, "got {d}");
    }

    #[test]
    fn box_distance_one_degree_longitude_gap() {
        // Facing edges at lon 1 and 2, shared latitude clamped to the
        // equator: haversine((0,1),(0,2)) = 111.19508 km = 2*pi*R/360.
        let a = bx(0.0, 0.0, 1.0, 1.0);
        let b = bx(0.0, 2.0, 1.0, 3.0);
        let d = box_distance_km(&a, &b);
        assert!((d - 111.19508).abs() < 0.5, "got {d}");
    }

    fn demo_gazetteer() -> Vec<GazetteerEntry> {
        vec![
            GazetteerEntry::new("Paris", vec!["paris".into()], bx(48.5, 2.0, 49.1, 2.7)).unwrap(),
            GazetteerEntry::new(
                "Paris, Texas",
                vec!["paris, texas".into()],
                bx(33.5, -95.7, 33.8, -95.4),
            )
            .unwrap(),
            GazetteerEntry::new("London", vec!["london".into()], bx(51.2, -0.6, 51.8, 0.3))
                .unwrap(),
        ]
    }

    #[test]
    fn geocode_direct_alias_hit() {
        let g = demo_gazetteer();
        let b = geocode("Eiffel Tower, Paris, France", &g).unwrap();
        assert_eq!(b, g[0].bounds);
    }

    #[test]
    fn geocode_empty_text_fails() {
        assert!(matches!(
            geocode("", &demo_gazetteer()),
            Err(GeoError::NotGeocodable(_))
        ));
    }

    #[test]
    fn geocode_longest_alias_wins() {
        let g = demo_gazetteer();
        let b = geocode("Paris, Texas", &g).unwrap();
        assert_eq!(b, g[1].bounds, "longest alias must win");
    }

    #[test]
    fn is_correct_at_threshold_edge() {
        let th = 50.0;
        let origin = GeoBox::point(pt(0.0, 0.0));
        // ~12 km east.
        let twelve = GeoBox::point(pt(0.0, 12.0 / 111.1950802335329));
        assert!(is_correct(&twelve, &origin, th));
        // Binary-search a point whose distance is as close to 50 km as
        // f64 allows from below: <= must hold at the threshold.
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..80 {
            let mid = (lo + hi) / 2.0;
            if haversine_km(pt(0.0, 0.0), pt(0.0, mid)) <= th {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let at_edge = GeoBox::point(pt(0.0, lo));
        assert!(box_distance_km(&at_edge, &origin) <= th);
        assert!(is_correct(&at_edge, &origin, th));
        // 60 km is out.
        let sixty = GeoBox::point(pt(0.0, 60.0 / 111.1950802335329 * 1.001));
        assert!(box_distance_km(&sixty, &origin) > th);
        assert!(!is_correct(&sixty, &origin, th));
    }

    fn outcome(id: &str, d: f64, c: bool) -> EvalOutcome {
        EvalOutcome {
            sample_id: id.into(),
            distance_km: d,
            correct: c,
        }
    }

    #[test]
    fn accuracy_counts() {
        let half = vec![
            outcome("a", 1.0, true),
            outcome("b", 2.0, true),
            outcome("c", 99.0, false),
            outcome("d", 99.0, false),
        ];
        assert_eq!(accuracy(&half).unwrap(), 0.5);
        let all = vec![outcome("a", 1.0, true), outcome("b", 0.0, true)];
        assert_eq!(accuracy(&all).unwrap(), 1.0);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn accuracy_477_of_1000() {
        let outcomes: Vec<EvalOutcome> = (0..1000)
            .map(|i| outcome(&format!("s{i}"), 0.0, i < 477))
            .collect();
        assert_eq!(accuracy(&outcomes).unwrap(), 0.477);
    }

    fn set(items: &[&str]) -> std::collections::BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn coverage_consistency_hand_computed() {
        let (cov, cons) =
            coverage_consistency(&set(&["a", "b", "c", "d"]), &set(&["a", "e"])).unwrap();
        assert_eq!(cov, 25.0);
        assert_eq!(cons, 50.0);
    }

    #[test]
    fn coverage_consistency_disjoint_and_identical() {
        let (cov, cons) = coverage_consistency(&set(&["a"]), &set(&["b"])).unwrap();
        assert_eq!((cov, cons), (0.0, 0.0));
        let (cov, cons) = coverage_consistency(&set(&["a", "b"]), &set(&["a", "b"])).unwrap();
        assert_eq!((cov, cons), (100.0, 100.0));
        assert!(coverage_consistency(&set(&[]), &set(&["a"])).is_err());
        assert!(coverage_consistency(&set(&["a"]), &set(&[])).is_err());
    }

    #[test]
    fn gazetteer_entry_rejects_duplicate_aliases() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        assert!(GazetteerEntry::new("X", vec!["a".into(), "A".into()], b).is_err());
        assert!(GazetteerEntry::new("", vec!["a".into()], b).is_err());
    }

    #[test]
    fn gazetteer_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gaz.csv");
        let entries = demo_gazetteer();
        save_gazetteer(&path, &entries).unwrap();
        let loaded = load_gazetteer(&path).unwrap();
        assert_eq!(loaded.len(), entries.len());
        assert_eq!(loaded[1].canonical_name, "Paris, Texas");
        assert_eq!(loaded[1].aliases, vec!["paris, texas".to_string()]);
        assert_eq!(loaded[0].bounds, entries[0].bounds);
    }

    #[test]
    fn gazetteer_csv_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gaz.csv");
        std::fs::write(
            &path,
            "canonical_name,aliases,south,west,north,east\nX,x,0,0,1,1\nY,y,zero,0,1,1\n",
        )
        .unwrap();
        match load_gazetteer(&path) {
            Err(GeoError::Gazetteer { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected line error, got {other:?}"),
        }
    }
}
