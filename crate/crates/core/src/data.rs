//! Domain types and CSV ingestion.
//!
//! POIs are kept sorted by id, so a POI's position in [`Dataset::pois`] is a
//! dense index used throughout feature extraction and inference. Lexicographic
//! order over indices therefore equals lexicographic order over ids.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::LatLon;

pub const POI_HEADER: [&str; 5] = ["poiID", "name", "category", "lat", "lon"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["userID", "trajID", "poiID", "arrivalTime", "departureTime"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiId(pub u32);

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for PoiId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(PoiId)
    }
}

/// A point of interest. The visit statistics are derived from trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub name: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    /// Distinct users who visited.
    pub popularity: u32,
    /// Total visit records.
    pub visits: u32,
    /// Mean visit duration in seconds.
    pub avg_duration: f64,
}

impl Poi {
    pub fn new(id: u32, name: &str, category: &str, lat: f64, lon: f64) -> Self {
        Self {
            id: PoiId(id),
            name: name.to_owned(),
            category: category.to_owned(),
            lat,
            lon,
            popularity: 0,
            visits: 0,
            avg_duration: 0.0,
        }
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelMode {
    Walking,
    Bicycling,
    Driving,
}

impl TravelMode {
    pub const ALL: [TravelMode; 3] = [TravelMode::Walking, TravelMode::Bicycling, TravelMode::Driving];

    pub fn as_str(self) -> &'static str {
        match self {
            TravelMode::Walking => "walking",
            TravelMode::Bicycling => "bicycling",
            TravelMode::Driving => "driving",
        }
    }
}

impl fmt::Display for TravelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TravelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walking" => Ok(TravelMode::Walking),
            "bicycling" => Ok(TravelMode::Bicycling),
            "driving" => Ok(TravelMode::Driving),
            other => Err(Error::InvalidInput(format!(
                "unknown travel mode `{other}` (expected walking, bicycling or driving)"
            ))),
        }
    }
}

/// Travel speed per mode, km/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpeeds {
    pub walking: f64,
    pub bicycling: f64,
    pub driving: f64,
}

impl Default for ModeSpeeds {
    fn default() -> Self {
        Self {
            walking: 5.0,
            bicycling: 15.0,
            driving: 40.0,
        }
    }
}

impl ModeSpeeds {
    pub fn speed(&self, mode: TravelMode) -> f64 {
        match mode {
            TravelMode::Walking => self.walking,
            TravelMode::Bicycling => self.bicycling,
            TravelMode::Driving => self.driving,
        }
    }

    pub fn set(&mut self, mode: TravelMode, kmh: f64) {
        match mode {
            TravelMode::Walking => self.walking = kmh,
            TravelMode::Bicycling => self.bicycling = kmh,
            TravelMode::Driving => self.driving = kmh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for mode in TravelMode::ALL {
            let v = self.speed(mode);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{mode} speed must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A trip request: start POI, number of POIs to visit, and travel mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub start: PoiId,
    pub length: usize,
    pub mode: TravelMode,
}

impl Query {
    pub fn new(start: PoiId, length: usize, mode: TravelMode) -> Self {
        Self { start, length, mode }
    }

    /// Checks the query against a POI set. Unknown start and `length < 2`
    /// are invalid; a length beyond the POI count is infeasible.
    pub fn validate(&self, dataset: &Dataset) -> Result<usize> {
        let start = dataset.index_of(self.start).ok_or(Error::UnknownPoi(self.start))?;
        if self.length < 2 {
            return Err(Error::InvalidQuery(format!(
                "trip length must be at least 2, got {}",
                self.length
            )));
        }
        if self.length > dataset.len() {
            return Err(Error::Infeasible {
                length: self.length,
                available: dataset.len(),
            });
        }
        Ok(start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub user_id: String,
    pub traj_id: String,
    pub poi_id: PoiId,
    /// Unix seconds, UTC.
    pub arrival: i64,
    pub departure: i64,
}

impl Visit {
    pub fn duration(&self) -> i64 {
        self.departure - self.arrival
    }
}

/// An arrival-ordered, repeat-free sequence of visits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub visits: Vec<Visit>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    pub fn pois(&self) -> impl Iterator<Item = PoiId> + '_ {
        self.visits.iter().map(|v| v.poi_id)
    }

    pub fn user_id(&self) -> Option<&str> {
        self.visits.first().map(|v| v.user_id.as_str())
    }
}

/// POIs plus the training trajectories. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    pois: Vec<Poi>,
    index: HashMap<PoiId, usize>,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Builds a dataset from POIs (taken as-is, including any derived
    /// statistics) and trajectories whose POIs must all be known.
    pub fn new(mut pois: Vec<Poi>, trajectories: Vec<Trajectory>) -> Result<Self> {
        pois.sort_by_key(|p| p.id);
        if let Some(w) = pois.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id));
        }
        for p in &pois {
            if !p.position().is_valid() {
                return Err(Error::InvalidInput(format!(
                    "POI {} has out-of-range coordinates ({}, {})",
                    p.id, p.lat, p.lon
                )));
            }
        }
        let index = pois.iter().enumerate().map(|(i, p)| (p.id, i)).collect::<HashMap<_, _>>();
        for t in &trajectories {
            for v in &t.visits {
                if !index.contains_key(&v.poi_id) {
                    return Err(Error::UnknownPoi(v.poi_id));
                }
            }
        }
        Ok(Self {
            pois,
            index,
            trajectories,
        })
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn index_of(&self, id: PoiId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn poi(&self, id: PoiId) -> Option<&Poi> {
        self.index_of(id).map(|i| &self.pois[i])
    }

    /// Recomputes popularity, visits and mean duration from the stored
    /// trajectories.
    pub fn with_recomputed_statistics(mut self) -> Self {
        let mut users: Vec<HashSet<&str>> = vec![HashSet::new(); self.pois.len()];
        let mut visits = vec![0u32; self.pois.len()];
        let mut seconds = vec![0i128; self.pois.len()];
        for v in self.trajectories.iter().flat_map(|t| &t.visits) {
            let i = self.index[&v.poi_id];
            users[i].insert(v.user_id.as_str());
            visits[i] += 1;
            seconds[i] += i128::from(v.duration());
        }
        let stats: Vec<(u32, u32, f64)> = (0..self.pois.len())
            .map(|i| {
                let avg = if visits[i] == 0 {
                    0.0
                } else {
                    seconds[i] as f64 / f64::from(visits[i])
                };
                (users[i].len() as u32, visits[i], avg)
            })
            .collect();
        for (poi, (popularity, visits, avg)) in self.pois.iter_mut().zip(stats) {
            poi.popularity = popularity;
            poi.visits = visits;
            poi.avg_duration = avg;
        }
        self
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Header {
            path: path.to_owned(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

fn field<T: FromStr>(path: &Path, row: usize, record: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::MalformedRow {
        path: path.to_owned(),
        row,
        message: format!("cannot parse {name} from `{raw}`"),
    })
}

/// Reads a POI table (`poiID,name,category,lat,lon`). Derived statistics are
/// zero until trajectories are loaded.
pub fn load_pois(path: impl AsRef<Path>) -> Result<Vec<Poi>> {
    let path = path.as_ref();
    read_pois(path, open(path)?)
}

fn read_pois<R: Read>(path: &Path, input: R) -> Result<Vec<Poi>> {
    let mut rdr = reader(input);
    check_header(path, rdr.headers()?, &POI_HEADER)?;
    let mut seen = HashSet::new();
    let mut pois = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed_csv(path, e))?;
        let row = line_of(&record);
        let id: PoiId = field(path, row, &record, 0, "poiID")?;
        let lat: f64 = field(path, row, &record, 3, "lat")?;
        let lon: f64 = field(path, row, &record, 4, "lon")?;
        if !LatLon::new(lat, lon).is_valid() {
            return Err(Error::MalformedRow {
                path: path.to_owned(),
                row,
                message: format!("coordinates ({lat}, {lon}) out of range"),
            });
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
        pois.push(Poi {
            id,
            name: record[1].trim().to_owned(),
            category: record[2].trim().to_owned(),
            lat,
            lon,
            popularity: 0,
            visits: 0,
            avg_duration: 0.0,
        });
    }
    Ok(pois)
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn malformed_csv(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::MalformedRow {
        path: path.to_owned(),
        row,
        message: e.to_string(),
    }
}

/// Reads trajectory visits and assembles the dataset.
///
/// Rows are grouped by `trajID` and ordered by arrival. Consecutive repeats
/// of a POI merge into one visit (first arrival, last departure); a
/// non-consecutive repeat starts a new trajectory `<trajID>#2`, `#3`, ...
pub fn load_trajectories(path: impl AsRef<Path>, pois: Vec<Poi>) -> Result<Dataset> {
    let path = path.as_ref();
    read_trajectories(path, open(path)?, pois)
}

fn read_trajectories<R: Read>(path: &Path, input: R, pois: Vec<Poi>) -> Result<Dataset> {
    let known: HashSet<PoiId> = pois.iter().map(|p| p.id).collect();
    let trajectories = read_records(path, input, Some(&known))?;
    Ok(Dataset::new(pois, trajectories)?.with_recomputed_statistics())
}

/// Reads trajectories without checking POI ids against a POI table, for
/// held-out evaluation files. The same grouping and repeat rules apply.
pub fn load_trajectory_records(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    read_records(path, open(path)?, None)
}

fn read_records<R: Read>(path: &Path, input: R, known: Option<&HashSet<PoiId>>) -> Result<Vec<Trajectory>> {
    let mut rdr = reader(input);
    check_header(path, rdr.headers()?, &TRAJECTORY_HEADER)?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Visit>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed_csv(path, e))?;
        let row = line_of(&record);
        let poi_id: PoiId = field(path, row, &record, 2, "poiID")?;
        if known.is_some_and(|k| !k.contains(&poi_id)) {
            return Err(Error::UnknownPoi(poi_id));
        }
        let arrival: i64 = field(path, row, &record, 3, "arrivalTime")?;
        let departure: i64 = field(path, row, &record, 4, "departureTime")?;
        if departure < arrival {
            return Err(Error::MalformedRow {
                path: path.to_owned(),
                row,
                message: format!("departure {departure} precedes arrival {arrival}"),
            });
        }
        let traj_id = record[1].trim().to_owned();
        let visit = Visit {
            user_id: record[0].trim().to_owned(),
            traj_id: traj_id.clone(),
            poi_id,
            arrival,
            departure,
        };
        groups
            .entry(traj_id)
            .or_insert_with_key(|k| {
                order.push(k.clone());
                Vec::new()
            })
            .push(visit);
    }

    let mut trajectories = Vec::new();
    for id in order {
        let mut visits = groups.remove(&id).unwrap_or_default();
        visits.sort_by_key(|v| v.arrival);
        trajectories.extend(split_repeats(&id, visits));
    }
    Ok(trajectories)
}

fn split_repeats(id: &str, visits: Vec<Visit>) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut current: Vec<Visit> = Vec::new();
    let mut seen = HashSet::new();
    for visit in visits {
        if let Some(last) = current.last_mut() {
            if last.poi_id == visit.poi_id {
                last.departure = visit.departure.max(last.departure);
                continue;
            }
        }
        if !seen.insert(visit.poi_id) {
            out.push(std::mem::take(&mut current));
            seen.clear();
            seen.insert(visit.poi_id);
        }
        current.push(visit);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out.into_iter()
        .enumerate()
        .map(|(n, mut visits)| {
            let piece = if n == 0 { id.to_owned() } else { format!("{id}#{}", n + 1) };
            for v in &mut visits {
                v.traj_id = piece.clone();
            }
            Trajectory { id: piece, visits }
        })
        .collect()
}

pub fn write_pois_csv<W: Write>(out: W, pois: &[Poi]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POI_HEADER)?;
    for p in pois {
        w.write_record([
            p.id.to_string(),
            p.name.clone(),
            p.category.clone(),
            p.lat.to_string(),
            p.lon.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trajectories_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for v in trajectories.iter().flat_map(|t| &t.visits) {
        w.write_record([
            v.user_id.clone(),
            v.traj_id.clone(),
            v.poi_id.to_string(),
            v.arrival.to_string(),
            v.departure.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-POI `(popularity, visits, avg_duration)` keyed by id.
pub fn statistics(dataset: &Dataset) -> BTreeMap<PoiId, (u32, u32, f64)> {
    dataset
        .pois()
        .iter()
        .map(|p| (p.id, (p.popularity, p.visits, p.avg_duration)))
        .collect()
}
