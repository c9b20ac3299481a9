//! File layout under the data directory:
//!
//! - `registry.json`: all guesthouse profiles (rewritten on change)
//! - `calendar-<id>.log`: a snapshot line then absolute per-night updates
//! - `bookings.log`: one full booking record per state change, last wins
//! - `history-<user>.log`: history entries in append order
//!
//! Every line is canonical JSON.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Booking, HistoryEntry};
use crate::canonical::to_canonical_string;
use crate::domain::{AvailabilityCalendar, BookingId, ByRoomType, GuesthouseId, GuesthouseProfile, UserId};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub(super) enum CalendarRecord {
    Snapshot {
        calendar: AvailabilityCalendar,
        closed: BTreeMap<NaiveDate, ByRoomType<u32>>,
    },
    Night {
        date: NaiveDate,
        free: ByRoomType<u32>,
        closed: ByRoomType<u32>,
    },
}

#[derive(Default)]
pub(super) struct Loaded {
    pub profiles: Vec<GuesthouseProfile>,
    pub calendars: BTreeMap<GuesthouseId, (AvailabilityCalendar, BTreeMap<NaiveDate, ByRoomType<u32>>)>,
    pub bookings: BTreeMap<BookingId, Booking>,
    pub history: BTreeMap<UserId, Vec<HistoryEntry>>,
}

#[derive(Debug)]
pub(super) struct FileBackend {
    dir: PathBuf,
}

/// File-name-safe rendering of an id; anything unusual is hex-encoded.
fn file_component(id: &str) -> String {
    if !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        id.to_owned()
    } else {
        format!("x{}", hex::encode(id))
    }
}

fn to_line<T: Serialize>(value: &T) -> io::Result<String> {
    let mut line = to_canonical_string(value).map_err(io::Error::other)?;
    line.push('\n');
    Ok(line)
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

impl FileBackend {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn calendar_path(&self, gh: &GuesthouseId) -> PathBuf {
        self.dir.join(format!("calendar-{}.log", file_component(gh.as_str())))
    }

    fn history_path(&self, user: &UserId) -> PathBuf {
        self.dir.join(format!("history-{}.log", file_component(user.as_str())))
    }

    fn append(&self, path: &Path, lines: &str) -> io::Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(lines.as_bytes())
    }

    fn replace(&self, path: &Path, contents: &str) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, contents)?;
        fs::rename(tmp, path)
    }

    pub fn write_registry(&self, profiles: &[GuesthouseProfile]) -> io::Result<()> {
        let mut body = to_canonical_string(profiles).map_err(io::Error::other)?;
        body.push('\n');
        self.replace(&self.dir.join("registry.json"), &body)
    }

    pub fn append_calendar(&self, gh: &GuesthouseId, records: &[CalendarRecord]) -> io::Result<()> {
        let mut lines = String::new();
        for r in records {
            lines.push_str(&to_line(r)?);
        }
        self.append(&self.calendar_path(gh), &lines)
    }

    /// Replaces a calendar log with a single snapshot line.
    pub fn compact_calendar(&self, gh: &GuesthouseId, snapshot: &CalendarRecord) -> io::Result<()> {
        self.replace(&self.calendar_path(gh), &to_line(snapshot)?)
    }

    pub fn append_booking(&self, booking: &Booking) -> io::Result<()> {
        self.append(&self.dir.join("bookings.log"), &to_line(booking)?)
    }

    pub fn append_history(&self, entry: &HistoryEntry) -> io::Result<()> {
        self.append(&self.history_path(&entry.user_id), &to_line(entry)?)
    }

    pub fn load(&self) -> io::Result<Loaded> {
        let mut loaded = Loaded::default();
        let registry = self.dir.join("registry.json");
        if registry.exists() {
            let text = fs::read_to_string(&registry)?;
            loaded.profiles = serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("registry.json: {e}")))?;
        }
        for profile in &loaded.profiles {
            let id = &profile.guesthouse_id;
            let mut state: Option<(AvailabilityCalendar, BTreeMap<NaiveDate, ByRoomType<u32>>)> = None;
            for record in read_lines::<CalendarRecord>(&self.calendar_path(id))? {
                match record {
                    CalendarRecord::Snapshot { calendar, closed } => state = Some((calendar, closed)),
                    CalendarRecord::Night { date, free, closed } => {
                        let (calendar, closures) = state.as_mut().ok_or_else(|| {
                            io::Error::new(
                                io::ErrorKind::InvalidData,
                                format!("calendar log for {id} lacks a snapshot"),
                            )
                        })?;
                        calendar
                            .set_free(date, free)
                            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
                        if closed == ByRoomType::default() {
                            closures.remove(&date);
                        } else {
                            closures.insert(date, closed);
                        }
                    }
                }
            }
            let state = state.unwrap_or_else(|| {
                (
                    AvailabilityCalendar::new(id.clone(), profile.inventory),
                    BTreeMap::new(),
                )
            });
            loaded.calendars.insert(id.clone(), state);
        }
        for booking in read_lines::<Booking>(&self.dir.join("bookings.log"))? {
            loaded.bookings.insert(booking.booking_id.clone(), booking);
        }
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let is_history = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("history-") && n.ends_with(".log"));
            if is_history {
                for h in read_lines::<HistoryEntry>(&path)? {
                    loaded.history.entry(h.user_id.clone()).or_default().push(h);
                }
            }
        }
        Ok(loaded)
    }
}
