//! ZIP polygon containment, nearest-sensor lookup and imagery tile selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{parse_timestamp, TimeWindow, Zip};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("no sensors available")]
    NoSensors,
    #[error("invalid region for zip {zip}: {reason}")]
    InvalidRegion { zip: String, reason: String },
    #[error("invalid sensor data: {0}")]
    InvalidSensor(String),
    #[error("invalid tile {tile}: {reason}")]
    InvalidTile { tile: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = LatLon { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon) {
            Ok(())
        } else {
            Err(GeoError::OutOfRange {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64, GeoError> {
    a.validate()?;
    b.validate()?;
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn contains(&self, p: LatLon) -> bool {
        self.min_lat <= p.lat && p.lat <= self.max_lat && self.min_lon <= p.lon && p.lon <= self.max_lon
    }

    pub fn center(&self) -> LatLon {
        LatLon {
            lat: (self.min_lat + self.max_lat) / 2.0,
            lon: (self.min_lon + self.max_lon) / 2.0,
        }
    }
}

/// A ZIP code area: one or more closed rings (outer boundaries and holes,
/// combined under the even-odd rule) plus a representative centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipRegion {
    pub zip: Zip,
    pub polygon: Vec<Vec<LatLon>>,
    pub centroid: LatLon,
}

impl ZipRegion {
    pub fn new(zip: Zip, polygon: Vec<Vec<LatLon>>, centroid: Option<LatLon>) -> Result<Self, GeoError> {
        let invalid = |reason: String| GeoError::InvalidRegion {
            zip: zip.to_string(),
            reason,
        };
        if polygon.is_empty() {
            return Err(invalid("no rings".into()));
        }
        for ring in &polygon {
            if ring.len() < 4 {
                return Err(invalid("ring needs at least 4 vertices".into()));
            }
            if ring.first() != ring.last() {
                return Err(invalid("ring is not closed".into()));
            }
            for p in ring {
                p.validate()?;
            }
        }
        let centroid = match centroid {
            Some(c) => c,
            None => ring_centroid(&polygon[largest_ring(&polygon)]),
        };
        centroid.validate()?;
        let region = ZipRegion {
            zip: zip.clone(),
            polygon,
            centroid,
        };
        if !region.bbox().contains(centroid) {
            return Err(invalid("centroid outside bounding box".into()));
        }
        Ok(region)
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox {
            min_lat: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            min_lon: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
        };
        for p in self.polygon.iter().flatten() {
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
        }
        b
    }
}

fn signed_area(ring: &[LatLon]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].lon * w[1].lat - w[1].lon * w[0].lat)
        .sum::<f64>()
        / 2.0
}

fn largest_ring(rings: &[Vec<LatLon>]) -> usize {
    (0..rings.len())
        .max_by(|&a, &b| signed_area(&rings[a]).abs().total_cmp(&signed_area(&rings[b]).abs()))
        .unwrap_or(0)
}

/// Planar area centroid of a closed ring; vertex mean when degenerate.
fn ring_centroid(ring: &[LatLon]) -> LatLon {
    let area = signed_area(ring);
    if area.abs() < 1e-15 {
        let n = (ring.len() - 1) as f64;
        let (lat, lon) = ring[..ring.len() - 1]
            .iter()
            .fold((0.0, 0.0), |(a, o), p| (a + p.lat, o + p.lon));
        return LatLon { lat: lat / n, lon: lon / n };
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for w in ring.windows(2) {
        let cross = w[0].lon * w[1].lat - w[1].lon * w[0].lat;
        cx += (w[0].lon + w[1].lon) * cross;
        cy += (w[0].lat + w[1].lat) * cross;
    }
    LatLon {
        lat: cy / (6.0 * area),
        lon: cx / (6.0 * area),
    }
}

fn on_segment(p: LatLon, a: LatLon, b: LatLon) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if cross.abs() > BOUNDARY_EPS {
        return false;
    }
    p.lon >= a.lon.min(b.lon) - BOUNDARY_EPS
        && p.lon <= a.lon.max(b.lon) + BOUNDARY_EPS
        && p.lat >= a.lat.min(b.lat) - BOUNDARY_EPS
        && p.lat <= a.lat.max(b.lat) + BOUNDARY_EPS
}

/// Even-odd ray casting over all rings; points on an edge count as inside.
pub fn point_in_zip(p: LatLon, region: &ZipRegion) -> bool {
    if !region.bbox().contains(p) {
        return false;
    }
    let mut inside = false;
    for ring in &region.polygon {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

// ---------------------------------------------------------------------------
// Sensors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub hour: DateTime<Utc>,
    pub precip_in: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSite {
    pub sensor_id: String,
    pub location: LatLon,
    pub readings: Vec<SensorReading>,
}

impl SensorSite {
    pub fn new(sensor_id: String, location: LatLon, readings: Vec<SensorReading>) -> Result<Self, GeoError> {
        location.validate()?;
        if let Some(r) = readings.iter().find(|r| !r.precip_in.is_finite() || r.precip_in < 0.0) {
            return Err(GeoError::InvalidSensor(format!(
                "{sensor_id}: invalid precipitation {} at {}",
                r.precip_in, r.hour
            )));
        }
        if let Some(w) = readings.windows(2).find(|w| w[0].hour >= w[1].hour) {
            return Err(GeoError::InvalidSensor(format!(
                "{sensor_id}: readings not strictly increasing at {}",
                w[1].hour
            )));
        }
        Ok(SensorSite {
            sensor_id,
            location,
            readings,
        })
    }

    pub fn readings_in<'a>(&'a self, window: &'a TimeWindow) -> impl Iterator<Item = &'a SensorReading> + 'a {
        self.readings.iter().filter(move |r| window.contains(r.hour))
    }
}

/// Sensor closest to the ZIP centroid; ties go to the smaller id.
pub fn nearest_sensor<'a>(zip: &ZipRegion, sensors: &'a [SensorSite]) -> Result<(&'a SensorSite, f64), GeoError> {
    let mut best: Option<(&SensorSite, f64)> = None;
    for s in sensors {
        let d = haversine_km(zip.centroid, s.location)?;
        let better = match best {
            None => true,
            Some((b, bd)) => d < bd || (d == bd && s.sensor_id < b.sensor_id),
        };
        if better {
            best = Some((s, d));
        }
    }
    best.ok_or(GeoError::NoSensors)
}

/// Reads `sensor_id, lat, lon, hour, precip_in` rows, grouping by sensor.
pub fn load_sensors_csv(path: &Path) -> Result<Vec<SensorSite>, GeoError> {
    #[derive(Deserialize)]
    struct Row {
        sensor_id: String,
        lat: f64,
        lon: f64,
        hour: String,
        precip_in: f64,
    }
    let parse_err = |detail: String| GeoError::Parse {
        path: path.display().to_string(),
        detail,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let mut grouped: BTreeMap<String, (LatLon, Vec<SensorReading>)> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| parse_err(format!("row {}: {e}", i + 2)))?;
        let loc = LatLon::new(row.lat, row.lon)?;
        let hour = parse_timestamp(&row.hour).map_err(|e| parse_err(e.to_string()))?;
        let entry = grouped.entry(row.sensor_id.clone()).or_insert((loc, Vec::new()));
        if entry.0 != loc {
            return Err(GeoError::InvalidSensor(format!("{}: inconsistent location", row.sensor_id)));
        }
        entry.1.push(SensorReading {
            hour,
            precip_in: row.precip_in,
        });
    }
    grouped
        .into_iter()
        .map(|(id, (loc, mut readings))| {
            readings.sort_by_key(|r| r.hour);
            SensorSite::new(id, loc, readings)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Imagery tiles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageryTile {
    pub tile_id: String,
    pub bbox: BBox,
    pub acquired_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_id: Option<String>,
    /// Image location handed to the visual analyst as an opaque attachment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uri: Option<String>,
}

impl ImageryTile {
    pub fn validate(&self) -> Result<(), GeoError> {
        let b = &self.bbox;
        if !(b.min_lat < b.max_lat && b.min_lon < b.max_lon) {
            return Err(GeoError::InvalidTile {
                tile: self.tile_id.clone(),
                reason: "bbox min must be below max on both axes".into(),
            });
        }
        LatLon::new(b.min_lat, b.min_lon)?;
        LatLon::new(b.max_lat, b.max_lon)?;
        Ok(())
    }

    pub fn center(&self) -> LatLon {
        self.bbox.center()
    }
}

pub fn load_tiles_jsonl(path: &Path) -> Result<Vec<ImageryTile>, GeoError> {
    let s = fs::read_to_string(path).map_err(|e| GeoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut tiles = Vec::new();
    for (i, line) in s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let t: ImageryTile = serde_json::from_str(line).map_err(|e| GeoError::Parse {
            path: path.display().to_string(),
            detail: format!("line {}: {e}", i + 1),
        })?;
        t.validate()?;
        tiles.push(t);
    }
    Ok(tiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileVia {
    InPolygon,
    Radius,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedTile {
    pub tile: ImageryTile,
    pub distance_km: f64,
    pub via: TileVia,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileSelection {
    pub tiles: Vec<SelectedTile>,
    /// In-polygon tiles came from the acquisition pass nearest the window.
    pub nearest_pass_used: bool,
    pub fallback_used: bool,
    pub no_imagery: bool,
}

impl TileSelection {
    pub fn tile_ids(&self) -> Vec<String> {
        self.tiles.iter().map(|t| t.tile.tile_id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileQuery {
    pub radius_km: f64,
    pub min_tiles: usize,
}

impl Default for TileQuery {
    fn default() -> Self {
        TileQuery {
            radius_km: 5.0,
            min_tiles: 1,
        }
    }
}

/// Tiles acquired inside the window, or else those of the acquisition date
/// closest to it (earlier date on ties).
fn temporal_subset<'a>(tiles: &[&'a ImageryTile], window: &TimeWindow) -> (Vec<&'a ImageryTile>, bool) {
    let in_window: Vec<_> = tiles.iter().copied().filter(|t| window.contains(t.acquired_at)).collect();
    if !in_window.is_empty() || tiles.is_empty() {
        return (in_window, false);
    }
    let dates: BTreeSet<NaiveDate> = tiles.iter().map(|t| t.acquired_at.date_naive()).collect();
    let pass = dates
        .iter()
        .copied()
        .min_by_key(|d| {
            tiles
                .iter()
                .filter(|t| t.acquired_at.date_naive() == *d)
                .map(|t| window.distance_to(t.acquired_at))
                .min()
                .unwrap_or(chrono::Duration::MAX)
        })
        .expect("non-empty");
    (
        tiles.iter().copied().filter(|t| t.acquired_at.date_naive() == pass).collect(),
        true,
    )
}

/// In-polygon tiles first (bbox center membership); when fewer than
/// `min_tiles`, adds tiles within `radius_km` of the centroid. Output is
/// ordered by centroid distance, then tile id.
pub fn tiles_for_query(
    zip: &ZipRegion,
    window: &TimeWindow,
    tiles: &[ImageryTile],
    query: TileQuery,
) -> Result<TileSelection, GeoError> {
    let in_poly: Vec<&ImageryTile> = tiles.iter().filter(|t| point_in_zip(t.center(), zip)).collect();
    let (primary, nearest_pass_used) = temporal_subset(&in_poly, window);
    let mut chosen: BTreeMap<&str, SelectedTile> = BTreeMap::new();
    for t in primary {
        let d = haversine_km(zip.centroid, t.center())?;
        chosen.insert(
            &t.tile_id,
            SelectedTile {
                tile: t.clone(),
                distance_km: d,
                via: TileVia::InPolygon,
            },
        );
    }
    let fallback_used = chosen.len() < query.min_tiles;
    if fallback_used {
        let mut nearby = Vec::new();
        for t in tiles.iter().filter(|t| !chosen.contains_key(t.tile_id.as_str())) {
            if haversine_km(zip.centroid, t.center())? <= query.radius_km {
                nearby.push(t);
            }
        }
        let (nearby, _) = temporal_subset(&nearby, window);
        for t in nearby {
            let d = haversine_km(zip.centroid, t.center())?;
            chosen.insert(
                &t.tile_id,
                SelectedTile {
                    tile: t.clone(),
                    distance_km: d,
                    via: TileVia::Radius,
                },
            );
        }
    }
    let mut out: Vec<SelectedTile> = chosen.into_values().collect();
    out.sort_by(|a, b| {
        a.distance_km
            .total_cmp(&b.distance_km)
            .then_with(|| a.tile.tile_id.cmp(&b.tile.tile_id))
    });
    Ok(TileSelection {
        no_imagery: out.is_empty(),
        tiles: out,
        nearest_pass_used,
        fallback_used,
    })
}

// ---------------------------------------------------------------------------
// GeoJSON

fn parse_position(v: &Value) -> Option<LatLon> {
    let arr = v.as_array()?;
    Some(LatLon {
        lon: arr.first()?.as_f64()?,
        lat: arr.get(1)?.as_f64()?,
    })
}

fn parse_rings(v: &Value) -> Option<Vec<Vec<LatLon>>> {
    v.as_array()?
        .iter()
        .map(|ring| ring.as_array()?.iter().map(parse_position).collect())
        .collect()
}

/// Parses a FeatureCollection of Polygon/MultiPolygon features carrying a
/// `zip` property. An optional `centroid` property (`[lon, lat]`) overrides
/// the computed centroid.
pub fn parse_zip_regions(geojson: &str) -> Result<Vec<ZipRegion>, GeoError> {
    let err = |detail: String| GeoError::Parse {
        path: "<geojson>".into(),
        detail,
    };
    let root: Value = serde_json::from_str(geojson).map_err(|e| err(e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| err("missing features array".into()))?;
    let mut regions = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties");
        let zip_raw = props
            .and_then(|p| p.get("zip"))
            .and_then(|z| match z {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .ok_or_else(|| err(format!("feature {i}: missing zip property")))?;
        let zip = Zip::new(&zip_raw).map_err(|e| err(format!("feature {i}: {e}")))?;
        let geom = f.get("geometry").ok_or_else(|| err(format!("feature {i}: missing geometry")))?;
        let coords = geom.get("coordinates").ok_or_else(|| err(format!("feature {i}: missing coordinates")))?;
        let rings = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => parse_rings(coords),
            Some("MultiPolygon") => coords
                .as_array()
                .and_then(|polys| polys.iter().map(parse_rings).collect::<Option<Vec<_>>>())
                .map(|p| p.into_iter().flatten().collect()),
            other => return Err(err(format!("feature {i}: unsupported geometry {other:?}"))),
        }
        .ok_or_else(|| err(format!("feature {i}: malformed coordinates")))?;
        let centroid = props.and_then(|p| p.get("centroid")).and_then(parse_position);
        regions.push(ZipRegion::new(zip, rings, centroid)?);
    }
    Ok(regions)
}

pub fn load_zip_regions(path: &Path) -> Result<Vec<ZipRegion>, GeoError> {
    let s = fs::read_to_string(path).map_err(|e| GeoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_zip_regions(&s).map_err(|e| match e {
        GeoError::Parse { detail, .. } => GeoError::Parse {
            path: path.display().to_string(),
            detail,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn square(zip: &str, lat0: f64, lon0: f64, size: f64) -> ZipRegion {
        let ring = vec![
            LatLon { lat: lat0, lon: lon0 },
            LatLon { lat: lat0, lon: lon0 + size },
            LatLon { lat: lat0 + size, lon: lon0 + size },
            LatLon { lat: lat0 + size, lon: lon0 },
            LatLon { lat: lat0, lon: lon0 },
        ];
        ZipRegion::new(Zip::new(zip).unwrap(), vec![ring], None).unwrap()
    }

    fn tile(id: &str, center: LatLon, day: u32) -> ImageryTile {
        let h = 0.001;
        ImageryTile {
            tile_id: id.into(),
            bbox: BBox {
                min_lat: center.lat - h,
                max_lat: center.lat + h,
                min_lon: center.lon - h,
                max_lon: center.lon + h,
            },
            acquired_at: Utc.with_ymd_and_hms(2017, 8, day, 16, 0, 0).unwrap(),
            caption_doc_id: None,
            embedding_id: None,
            uri: None,
        }
    }

    fn window(d0: u32, d1: u32) -> TimeWindow {
        TimeWindow::new(
            Utc.with_ymd_and_hms(2017, 8, d0, 0, 0, 0).unwrap(),
            Utc.with_ymd_and_hms(2017, 8, d1, 23, 59, 59).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn haversine_basics() {
        let a = LatLon { lat: 29.7604, lon: -95.3698 };
        assert_eq!(haversine_km(a, a).unwrap(), 0.0);
        let anti = haversine_km(LatLon { lat: 0.0, lon: 0.0 }, LatLon { lat: 0.0, lon: 180.0 }).unwrap();
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-9);
        assert!((anti - 20015.1).abs() < 0.1);
        assert!(haversine_km(LatLon { lat: 91.0, lon: 0.0 }, a).is_err());
        assert!(haversine_km(a, LatLon { lat: 0.0, lon: -181.0 }).is_err());
    }

    #[test]
    fn containment_and_boundary() {
        let r = square("77002", 29.0, -95.0, 0.1);
        assert!(point_in_zip(r.centroid, &r));
        assert!(point_in_zip(LatLon { lat: 29.0, lon: -94.95 }, &r));
        assert!(point_in_zip(LatLon { lat: 29.0, lon: -95.0 }, &r));
        assert!(!point_in_zip(LatLon { lat: 30.0, lon: -95.0 }, &r));
    }

    #[test]
    fn region_validation() {
        let open = vec![
            LatLon { lat: 0.0, lon: 0.0 },
            LatLon { lat: 0.0, lon: 1.0 },
            LatLon { lat: 1.0, lon: 1.0 },
            LatLon { lat: 1.0, lon: 0.0 },
        ];
        assert!(ZipRegion::new(Zip::new("77002").unwrap(), vec![open], None).is_err());
        let r = square("77002", 0.0, 0.0, 1.0);
        assert!((r.centroid.lat - 0.5).abs() < 1e-12 && (r.centroid.lon - 0.5).abs() < 1e-12);
        assert!(ZipRegion::new(r.zip.clone(), r.polygon.clone(), Some(LatLon { lat: 5.0, lon: 0.5 })).is_err());
    }

    #[test]
    fn nearest_sensor_ties_and_empty() {
        let r = square("77002", 29.0, -95.0, 0.1);
        assert!(matches!(nearest_sensor(&r, &[]), Err(GeoError::NoSensors)));
        let at = |id: &str, p: LatLon| SensorSite::new(id.into(), p, vec![]).unwrap();
        let c = r.centroid;
        let sensors = vec![
            at("b", LatLon { lat: c.lat + 0.01, lon: c.lon }),
            at("a", LatLon { lat: c.lat - 0.01, lon: c.lon }),
            at("z", LatLon { lat: c.lat + 0.5, lon: c.lon }),
        ];
        let (s, _) = nearest_sensor(&r, &sensors).unwrap();
        // equal distances north and south of the centroid
        let d_a = haversine_km(c, sensors[1].location).unwrap();
        let d_b = haversine_km(c, sensors[0].location).unwrap();
        if d_a == d_b {
            assert_eq!(s.sensor_id, "a");
        } else {
            assert_eq!(s.sensor_id, if d_a < d_b { "a" } else { "b" });
        }
        let colocated = vec![sensors[2].clone(), at("c", c)];
        assert_eq!(nearest_sensor(&r, &colocated).unwrap().0.sensor_id, "c");
    }

    #[test]
    fn sensor_readings_validated() {
        let loc = LatLon { lat: 29.0, lon: -95.0 };
        let h = |d| Utc.with_ymd_and_hms(2017, 8, d, 0, 0, 0).unwrap();
        let r = |d, p| SensorReading { hour: h(d), precip_in: p };
        assert!(SensorSite::new("s".into(), loc, vec![r(1, 0.0), r(2, 1.0)]).is_ok());
        assert!(SensorSite::new("s".into(), loc, vec![r(2, 0.0), r(2, 1.0)]).is_err());
        assert!(SensorSite::new("s".into(), loc, vec![r(1, -0.1)]).is_err());
    }

    #[test]
    fn in_polygon_tile_suppresses_fallback() {
        let r = square("77002", 29.0, -95.0, 0.1);
        let tiles = vec![
            tile("in", r.centroid, 27),
            tile("near", LatLon { lat: 29.11, lon: -94.95 }, 27),
        ];
        let sel = tiles_for_query(&r, &window(25, 31), &tiles, TileQuery::default()).unwrap();
        assert_eq!(sel.tile_ids(), ["in"]);
        assert!(!sel.fallback_used && !sel.no_imagery);
    }

    #[test]
    fn radius_fallback_nearest_first() {
        let r = square("77002", 29.0, -95.0, 0.02);
        let c = r.centroid;
        // all north of the polygon edge (29.02), within 5 km of the centroid
        let tiles = vec![
            tile("t3", LatLon { lat: c.lat + 0.025, lon: c.lon + 0.01 }, 31),
            tile("t1", LatLon { lat: c.lat + 0.015, lon: c.lon }, 31),
            tile("t2", LatLon { lat: c.lat + 0.020, lon: c.lon + 0.005 }, 31),
            tile("far", LatLon { lat: c.lat + 0.3, lon: c.lon }, 31),
        ];
        let sel = tiles_for_query(&r, &window(25, 31), &tiles, TileQuery::default()).unwrap();
        let mut oracle: Vec<(f64, &str)> = tiles[..3]
            .iter()
            .map(|t| (haversine_km(c, t.center()).unwrap(), t.tile_id.as_str()))
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(oracle.iter().all(|(d, _)| *d <= 5.0));
        assert_eq!(sel.tile_ids(), oracle.iter().map(|(_, id)| id.to_string()).collect::<Vec<_>>());
        assert!(sel.fallback_used);
        assert!(sel.tiles.iter().all(|t| t.via == TileVia::Radius));
    }

    #[test]
    fn nothing_within_radius_is_flagged() {
        let r = square("77002", 29.0, -95.0, 0.1);
        let tiles = vec![tile("far", LatLon { lat: 30.0, lon: -95.0 }, 31)];
        let sel = tiles_for_query(&r, &window(25, 31), &tiles, TileQuery::default()).unwrap();
        assert!(sel.tiles.is_empty() && sel.no_imagery && sel.fallback_used);
    }

    #[test]
    fn out_of_window_uses_nearest_pass() {
        let r = square("77002", 29.0, -95.0, 0.1);
        let tiles = vec![tile("late", r.centroid, 31), tile("later", LatLon { lat: 29.02, lon: -94.98 }, 30)];
        let sel = tiles_for_query(&r, &window(27, 28), &tiles, TileQuery::default()).unwrap();
        assert_eq!(sel.tile_ids(), ["later"]);
        assert!(sel.nearest_pass_used && !sel.fallback_used);
    }

    #[test]
    fn geojson_polygon_and_multipolygon() {
        let gj = r#"{"type":"FeatureCollection","features":[
          {"type":"Feature","properties":{"zip":"77002"},"geometry":{"type":"Polygon",
            "coordinates":[[[-95.0,29.0],[-94.9,29.0],[-94.9,29.1],[-95.0,29.1],[-95.0,29.0]]]}},
          {"type":"Feature","properties":{"zip":77003},"geometry":{"type":"MultiPolygon",
            "coordinates":[[[[-95.0,30.0],[-94.9,30.0],[-94.9,30.1],[-95.0,30.0]]],
                           [[[-93.0,30.0],[-92.9,30.0],[-92.9,30.1],[-93.0,30.0]]]]}}]}"#;
        let regions = parse_zip_regions(gj).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[1].zip.as_str(), "77003");
        assert_eq!(regions[1].polygon.len(), 2);
        assert!(point_in_zip(LatLon { lat: 29.05, lon: -94.95 }, &regions[0]));
    }
}
