//! Session attendance: first-sighting ledger, roster finalization, CSV export
//! and the frame-by-frame session runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

use crate::detector::{detect_with, DetectParams, LinearModel};
use crate::gallery::{encode_face, is_valid_name, match_face, Gallery, MatchResult, Provider};
use crate::image_io::read_image;
use crate::par::Execution;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const HEADER: &str = "AdSoyad,Zaman,Tarih,Durum";
pub const HEADER_EN: &str = "IdName,Time,Date,Status";

#[derive(Debug, Error, PartialEq)]
pub enum AttendanceError {
    #[error("sighting at {found} does not belong to session date {session}")]
    WrongDate { session: NaiveDate, found: NaiveDate },
    #[error("manifest mixes session dates {first} and {other}")]
    MixedDates { first: NaiveDate, other: NaiveDate },
    #[error("manifest is not sorted by timestamp at row {0}")]
    Unsorted(usize),
    #[error("no session date: the manifest is empty and no date was given")]
    NoDate,
    #[error("ledger is not finalized against a roster")]
    NotFinalized,
    #[error("ledger is finalized and can no longer be changed")]
    Finalized,
    #[error("entry {0} breaks the present-iff-timed rule")]
    Inconsistent(String),
    #[error("duplicate roster id {0}")]
    DuplicateId(u64),
    #[error("{what} line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Present,
    Absent,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Present => "var",
            Status::Absent => "yok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttendanceEntry {
    /// `<id>-<NAME>`.
    pub id_name: String,
    pub time: Option<NaiveTime>,
    pub date: NaiveDate,
    pub status: Status,
}

impl AttendanceEntry {
    fn is_consistent(&self) -> bool {
        (self.status == Status::Present) == self.time.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Roster {
    entries: Vec<(u64, String)>,
}

impl Roster {
    pub fn new(mut entries: Vec<(u64, String)>) -> Result<Self, AttendanceError> {
        entries.sort_by_key(|e| e.0);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(AttendanceError::DuplicateId(pair[0].0));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u64, String)] {
        &self.entries
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.binary_search_by_key(&id, |e| e.0).is_ok()
    }

    /// Parses `id,name` CSV with a header row.
    pub fn parse_csv(text: &str) -> Result<Self, AttendanceError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| parse_err("roster", 1, e))?.clone();
        if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "name" {
            return Err(AttendanceError::Parse {
                what: "roster",
                line: 1,
                reason: "header must be id,name".into(),
            });
        }
        let mut entries = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_err("roster", line, e))?;
            let id = row[0].parse::<u64>().map_err(|_| AttendanceError::Parse {
                what: "roster",
                line,
                reason: format!("bad id {:?}", &row[0]),
            })?;
            let name = row[1].to_string();
            if !is_valid_name(&name) {
                return Err(AttendanceError::Parse {
                    what: "roster",
                    line,
                    reason: format!("name {name:?} must be uppercase ASCII letters"),
                });
            }
            entries.push((id, name));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, AttendanceError> {
        Self::parse_csv(&read_text(path)?)
    }
}

fn parse_err(what: &'static str, line: usize, e: impl fmt::Display) -> AttendanceError {
    AttendanceError::Parse {
        what,
        line,
        reason: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, AttendanceError> {
    std::fs::read_to_string(path).map_err(|e| AttendanceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttendanceLedger {
    session_date: NaiveDate,
    entries: BTreeMap<u64, AttendanceEntry>,
    /// Set by `finalize`; rows outside it are non-roster sightings.
    roster_ids: Option<BTreeSet<u64>>,
}

impl AttendanceLedger {
    pub fn new(session_date: NaiveDate) -> Self {
        Self {
            session_date,
            entries: BTreeMap::new(),
            roster_ids: None,
        }
    }

    pub fn session_date(&self) -> NaiveDate {
        self.session_date
    }

    pub fn entries(&self) -> &BTreeMap<u64, AttendanceEntry> {
        &self.entries
    }

    pub fn is_finalized(&self) -> bool {
        self.roster_ids.is_some()
    }

    /// Records a sighting. The first sighting of an id wins; later ones are ignored.
    pub fn mark_present(
        &mut self,
        id: u64,
        name: &str,
        timestamp: NaiveDateTime,
    ) -> Result<(), AttendanceError> {
        if self.is_finalized() {
            return Err(AttendanceError::Finalized);
        }
        if timestamp.date() != self.session_date {
            return Err(AttendanceError::WrongDate {
                session: self.session_date,
                found: timestamp.date(),
            });
        }
        self.entries.entry(id).or_insert_with(|| AttendanceEntry {
            id_name: format!("{id}-{name}"),
            time: Some(timestamp.time()),
            date: timestamp.date(),
            status: Status::Present,
        });
        Ok(())
    }

    /// Marks every unsighted roster id absent. Idempotent.
    pub fn finalize(&mut self, roster: &Roster) {
        for (id, name) in roster.entries() {
            self.entries.entry(*id).or_insert_with(|| AttendanceEntry {
                id_name: format!("{id}-{name}"),
                time: None,
                date: self.session_date,
                status: Status::Absent,
            });
        }
        self.roster_ids = Some(roster.entries().iter().map(|e| e.0).collect());
    }

    /// Roster rows in ascending id order.
    pub fn roster_entries(&self) -> Result<Vec<&AttendanceEntry>, AttendanceError> {
        let ids = self.roster_ids.as_ref().ok_or(AttendanceError::NotFinalized)?;
        ids.iter()
            .map(|id| self.entries.get(id).ok_or(AttendanceError::NotFinalized))
            .collect()
    }

    /// Sightings of ids that are not on the roster, ascending id.
    pub fn non_roster(&self) -> Vec<&AttendanceEntry> {
        match &self.roster_ids {
            Some(ids) => self
                .entries
                .iter()
                .filter(|(id, _)| !ids.contains(id))
                .map(|(_, e)| e)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Attendance CSV with the `AdSoyad,Zaman,Tarih,Durum` header.
    pub fn export_csv(&self) -> Result<Vec<u8>, AttendanceError> {
        self.export_csv_with_header(HEADER)
    }

    pub fn export_csv_with_header(&self, header: &str) -> Result<Vec<u8>, AttendanceError> {
        let mut out = String::new();
        out.push_str(header);
        out.push('\n');
        for e in self.roster_entries()? {
            if !e.is_consistent() {
                return Err(AttendanceError::Inconsistent(e.id_name.clone()));
            }
            let time = e
                .time
                .map(|t| t.format("%H:%M:%S").to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.id_name,
                time,
                e.date.format("%Y-%m-%d"),
                e.status.as_str()
            ));
        }
        Ok(out.into_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub timestamp: NaiveDateTime,
}

/// Frames in capture order. Paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameManifest {
    pub rows: Vec<ManifestRow>,
}

impl FrameManifest {
    /// Parses `path,timestamp` CSV. Relative paths are joined onto `base`.
    pub fn parse_csv(text: &str, base: &Path) -> Result<Self, AttendanceError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| parse_err("manifest", 1, e))?.clone();
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "timestamp" {
            return Err(AttendanceError::Parse {
                what: "manifest",
                line: 1,
                reason: "header must be path,timestamp".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| parse_err("manifest", line, e))?;
            let timestamp = NaiveDateTime::parse_from_str(&row[1], TIMESTAMP_FORMAT).map_err(|e| {
                AttendanceError::Parse {
                    what: "manifest",
                    line,
                    reason: format!("timestamp {:?}: {e}", &row[1]),
                }
            })?;
            rows.push(ManifestRow {
                path: base.join(&row[0]),
                timestamp,
            });
        }
        let manifest = Self { rows };
        manifest.session_date()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, AttendanceError> {
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_csv(&read_text(path)?, base)
    }

    /// The single date every row shares; `None` for an empty manifest.
    pub fn session_date(&self) -> Result<Option<NaiveDate>, AttendanceError> {
        let Some(first) = self.rows.first() else {
            return Ok(None);
        };
        let date = first.timestamp.date();
        for (i, pair) in self.rows.windows(2).enumerate() {
            if pair[1].timestamp.date() != date {
                return Err(AttendanceError::MixedDates {
                    first: date,
                    other: pair[1].timestamp.date(),
                });
            }
            if pair[1].timestamp < pair[0].timestamp {
                return Err(AttendanceError::Unsorted(i + 1));
            }
        }
        Ok(Some(date))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportLine {
    Warn { frame: String, reason: String },
    /// A detected face that matched nobody; `None` when the gallery is empty.
    Unknown { frame: String, best_distance: Option<f64> },
    NonRoster { id_name: String, time: NaiveTime },
}

impl fmt::Display for ReportLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportLine::Warn { frame, reason } => write!(f, "WARN {frame} {reason}"),
            ReportLine::Unknown {
                frame,
                best_distance: Some(d),
            } => write!(f, "UNKNOWN {frame} {d:.6}"),
            ReportLine::Unknown {
                frame,
                best_distance: None,
            } => write!(f, "UNKNOWN {frame} -"),
            ReportLine::NonRoster { id_name, time } => {
                write!(f, "NONROSTER {id_name} {}", time.format("%H:%M:%S"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionReport {
    pub lines: Vec<ReportLine>,
}

impl SessionReport {
    pub fn unknown_count(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| matches!(l, ReportLine::Unknown { .. }))
            .count()
    }

    pub fn warning_count(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| matches!(l, ReportLine::Warn { .. }))
            .count()
    }

    pub fn to_text(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

/// Everything a session needs besides the frames.
#[derive(Debug, Clone)]
pub struct SessionSetup<'a> {
    pub roster: &'a Roster,
    pub gallery: &'a Gallery,
    pub model: &'a LinearModel,
    pub params: DetectParams,
    pub tolerance: f64,
    pub provider: Provider,
    /// Required when the manifest is empty; otherwise must agree with it.
    pub session_date: Option<NaiveDate>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub ledger: AttendanceLedger,
    pub report: SessionReport,
}

/// Runs detection and identification over every frame in order and returns
/// the finalized ledger. Unreadable frames become warnings.
pub fn run_session(
    manifest: &FrameManifest,
    setup: &SessionSetup<'_>,
) -> Result<SessionOutcome, AttendanceError> {
    let date = match (manifest.session_date()?, setup.session_date) {
        (Some(m), Some(given)) if m != given => {
            return Err(AttendanceError::MixedDates { first: given, other: m })
        }
        (Some(m), _) => m,
        (None, Some(given)) => given,
        (None, None) => return Err(AttendanceError::NoDate),
    };
    let mut ledger = AttendanceLedger::new(date);
    let mut report = SessionReport::default();
    for row in &manifest.rows {
        let frame_name = row.path.display().to_string();
        let warn = |report: &mut SessionReport, reason: String| {
            report.lines.push(ReportLine::Warn {
                frame: frame_name.clone(),
                reason,
            })
        };
        let frame = match read_image(&row.path) {
            Ok(img) => img.into_gray(),
            Err(e) => {
                warn(&mut report, e.to_string());
                continue;
            }
        };
        let detections = match detect_with(&frame, setup.model, &setup.params, setup.exec) {
            Ok(d) => d,
            Err(e) => {
                warn(&mut report, e.to_string());
                continue;
            }
        };
        for det in &detections {
            let embedding = match encode_face(&frame, det, &setup.provider) {
                Ok(e) => e,
                Err(e) => {
                    warn(&mut report, e.to_string());
                    continue;
                }
            };
            match match_face(&embedding, setup.gallery, setup.tolerance) {
                Ok(MatchResult::Identified { id, name, .. }) => {
                    ledger.mark_present(id, &name, row.timestamp)?;
                }
                Ok(MatchResult::Unknown { best_distance }) => report.lines.push(ReportLine::Unknown {
                    frame: frame_name.clone(),
                    best_distance,
                }),
                Err(e) => warn(&mut report, e.to_string()),
            }
        }
    }
    ledger.finalize(setup.roster);
    for e in ledger.non_roster() {
        report.lines.push(ReportLine::NonRoster {
            id_name: e.id_name.clone(),
            time: e.time.expect("sightings carry a time"),
        });
    }
    Ok(SessionOutcome { ledger, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2022, 7, 13).unwrap()
    }

    fn at(h: u32, m: u32, s: u32) -> NaiveDateTime {
        date().and_hms_opt(h, m, s).unwrap()
    }

    fn roster() -> Roster {
        Roster::new(vec![
            (102, "KANAKCINTILIKCI".into()),
            (100, "HUDAVERDIDEMIR".into()),
            (101, "JOHANNDOP".into()),
        ])
        .unwrap()
    }

    /// Test-only reader for the exported format.
    fn parse_export(bytes: &[u8], date: NaiveDate) -> BTreeMap<u64, AttendanceEntry> {
        let text = std::str::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(HEADER));
        lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                assert_eq!(f.len(), 4);
                let id = f[0].split('-').next().unwrap().parse().unwrap();
                let entry = AttendanceEntry {
                    id_name: f[0].into(),
                    time: (!f[1].is_empty())
                        .then(|| NaiveTime::parse_from_str(f[1], "%H:%M:%S").unwrap()),
                    date: NaiveDate::parse_from_str(f[2], "%Y-%m-%d").unwrap(),
                    status: match f[3] {
                        "var" => Status::Present,
                        "yok" => Status::Absent,
                        other => panic!("status {other}"),
                    },
                };
                assert_eq!(entry.date, date);
                (id, entry)
            })
            .collect()
    }

    #[test]
    fn first_sighting_wins() {
        let mut l = AttendanceLedger::new(date());
        l.mark_present(100, "HUDAVERDIDEMIR", at(15, 53, 55)).unwrap();
        l.mark_present(100, "HUDAVERDIDEMIR", at(16, 0, 0)).unwrap();
        let e = &l.entries()[&100];
        assert_eq!(e.time, NaiveTime::from_hms_opt(15, 53, 55));
        assert_eq!(e.status, Status::Present);
        assert_eq!(e.id_name, "100-HUDAVERDIDEMIR");

        let other_day = NaiveDate::from_ymd_opt(2022, 7, 14).unwrap().and_hms_opt(9, 0, 0).unwrap();
        assert!(matches!(
            l.mark_present(101, "JOHANNDOP", other_day),
            Err(AttendanceError::WrongDate { .. })
        ));
    }

    #[test]
    fn finalize_marks_absentees_and_is_idempotent() {
        let mut l = AttendanceLedger::new(date());
        l.mark_present(100, "HUDAVERDIDEMIR", at(15, 53, 55)).unwrap();
        l.mark_present(101, "JOHANNDOP", at(16, 55, 23)).unwrap();
        assert_eq!(l.export_csv(), Err(AttendanceError::NotFinalized));
        l.finalize(&roster());
        let absent = &l.entries()[&102];
        assert_eq!((absent.time, absent.status), (None, Status::Absent));
        let once = l.clone();
        l.finalize(&roster());
        assert_eq!(l, once);
        assert_eq!(l.mark_present(103, "X", at(17, 0, 0)), Err(AttendanceError::Finalized));
    }

    #[test]
    fn exports_the_three_student_sheet() {
        let mut l = AttendanceLedger::new(date());
        l.mark_present(101, "JOHANNDOP", at(16, 55, 23)).unwrap();
        l.mark_present(100, "HUDAVERDIDEMIR", at(15, 53, 55)).unwrap();
        l.finalize(&roster());
        let golden = "AdSoyad,Zaman,Tarih,Durum\n\
                      100-HUDAVERDIDEMIR,15:53:55,2022-07-13,var\n\
                      101-JOHANNDOP,16:55:23,2022-07-13,var\n\
                      102-KANAKCINTILIKCI,,2022-07-13,yok\n";
        let csv = l.export_csv().unwrap();
        assert_eq!(String::from_utf8(csv.clone()).unwrap(), golden);
        let parsed = parse_export(&csv, date());
        assert_eq!(&parsed, l.entries());
    }

    #[test]
    fn empty_ledger_exports_header_only() {
        let mut l = AttendanceLedger::new(date());
        l.finalize(&Roster::default());
        assert!(l.entries().is_empty());
        assert_eq!(l.export_csv().unwrap(), b"AdSoyad,Zaman,Tarih,Durum\n");
        assert_eq!(
            l.export_csv_with_header(HEADER_EN).unwrap(),
            b"IdName,Time,Date,Status\n"
        );
    }

    #[test]
    fn non_roster_sightings_are_kept_aside() {
        let mut l = AttendanceLedger::new(date());
        l.mark_present(555, "VISITOR", at(10, 0, 0)).unwrap();
        l.finalize(&roster());
        let rows = l.roster_entries().unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|e| e.status == Status::Absent));
        let extra = l.non_roster();
        assert_eq!(extra.len(), 1);
        assert_eq!(extra[0].id_name, "555-VISITOR");
        assert!(!String::from_utf8(l.export_csv().unwrap()).unwrap().contains("VISITOR"));
    }

    #[test]
    fn roster_csv() {
        let r = Roster::parse_csv("id,name\n101,JOHANNDOP\n100,HUDAVERDIDEMIR\n").unwrap();
        assert_eq!(r.entries()[0], (100, "HUDAVERDIDEMIR".into()));
        assert!(r.contains(101) && !r.contains(102));
        assert!(Roster::parse_csv("id,name\n1,A\n1,B\n").is_err());
        assert!(Roster::parse_csv("name,id\n").is_err());
        assert!(Roster::parse_csv("id,name\nx,A\n").is_err());
        assert!(Roster::parse_csv("id,name\n1,lower\n").is_err());
    }

    #[test]
    fn manifest_csv() {
        let m = FrameManifest::parse_csv(
            "path,timestamp\na.pgm,2022-07-13T15:53:55\nsub/b.pgm,2022-07-13T16:55:23\n",
            Path::new("/frames"),
        )
        .unwrap();
        assert_eq!(m.rows[1].path, PathBuf::from("/frames/sub/b.pgm"));
        assert_eq!(m.session_date().unwrap(), Some(date()));

        let mixed = "path,timestamp\na.pgm,2022-07-13T15:53:55\nb.pgm,2022-07-14T08:00:00\n";
        assert!(matches!(
            FrameManifest::parse_csv(mixed, Path::new("")),
            Err(AttendanceError::MixedDates { .. })
        ));
        let unsorted = "path,timestamp\na.pgm,2022-07-13T15:53:55\nb.pgm,2022-07-13T08:00:00\n";
        assert_eq!(
            FrameManifest::parse_csv(unsorted, Path::new("")),
            Err(AttendanceError::Unsorted(1))
        );
        assert!(FrameManifest::parse_csv("path,timestamp\na.pgm,13/07/2022\n", Path::new("")).is_err());
        assert_eq!(
            FrameManifest::parse_csv("path,timestamp\n", Path::new("")).unwrap().session_date(),
            Ok(None)
        );
    }

    #[test]
    fn report_lines() {
        let lines = [
            ReportLine::Warn { frame: "f.pgm".into(), reason: "truncated".into() },
            ReportLine::Unknown { frame: "g.pgm".into(), best_distance: Some(0.75) },
            ReportLine::NonRoster { id_name: "7-X".into(), time: NaiveTime::from_hms_opt(9, 5, 1).unwrap() },
        ];
        let text = SessionReport { lines: lines.to_vec() }.to_text();
        assert_eq!(text, "WARN f.pgm truncated\nUNKNOWN g.pgm 0.750000\nNONROSTER 7-X 09:05:01\n");
    }
}
