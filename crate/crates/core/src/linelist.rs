//! Case line lists: one row per suspected case with its notification and
//! system-entry dates.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::{parse_date, EpiWeek};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaseRecord {
    pub notification_date: NaiveDate,
    pub entry_date: NaiveDate,
}

impl CaseRecord {
    pub fn new(notification_date: NaiveDate, entry_date: NaiveDate) -> Result<Self> {
        if entry_date < notification_date {
            return Err(Error::Data(format!(
                "entry date {entry_date} precedes notification date {notification_date}"
            )));
        }
        Ok(Self {
            notification_date,
            entry_date,
        })
    }

    pub fn notification_week(&self) -> EpiWeek {
        EpiWeek::from_date(self.notification_date)
    }

    pub fn entry_week(&self) -> EpiWeek {
        EpiWeek::from_date(self.entry_date)
    }

    /// Whole epidemiological weeks between notification and system entry.
    pub fn delay_weeks(&self) -> Result<u32> {
        if self.entry_date < self.notification_date {
            return Err(Error::Data(format!(
                "entry date {} precedes notification date {}",
                self.entry_date, self.notification_date
            )));
        }
        Ok(self.entry_week().weeks_since(self.notification_week()) as u32)
    }
}

/// An ordered collection of case records. Duplicates are expected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineList {
    records: Vec<CaseRecord>,
}

impl LineList {
    pub fn new(records: Vec<CaseRecord>) -> Self {
        Self { records }
    }

    pub fn records(&self) -> &[CaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cases visible at the end of `week`: those entered on or before it.
    pub fn as_of(&self, week: EpiWeek) -> LineList {
        let last_day = week.end_date();
        LineList::new(
            self.records
                .iter()
                .filter(|r| r.entry_date <= last_day)
                .copied()
                .collect(),
        )
    }

    /// Cases notified within `[first, last]`.
    pub fn notified_between(&self, first: EpiWeek, last: EpiWeek) -> LineList {
        let (lo, hi) = (first.start_date(), last.end_date());
        LineList::new(
            self.records
                .iter()
                .filter(|r| r.notification_date >= lo && r.notification_date <= hi)
                .copied()
                .collect(),
        )
    }

    pub fn first_notification_week(&self) -> Option<EpiWeek> {
        self.records.iter().map(|r| r.notification_date).min().map(EpiWeek::from_date)
    }

    pub fn last_entry_week(&self) -> Option<EpiWeek> {
        self.records.iter().map(|r| r.entry_date).max().map(EpiWeek::from_date)
    }

    /// Count of cases per notification week over `[first, last]`, all delays.
    pub fn weekly_totals(&self, first: EpiWeek, last: EpiWeek) -> Vec<u64> {
        let n = (last.weeks_since(first) + 1).max(0) as usize;
        let mut totals = vec![0u64; n];
        let base = first.index();
        for r in &self.records {
            let i = r.notification_week().index() - base;
            if i >= 0 && (i as usize) < n {
                totals[i as usize] += 1;
            }
        }
        totals
    }

    pub fn from_csv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Input(format!("{source}: cannot read header: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["notification_date", "entry_date"] {
            return Err(Error::Input(format!(
                "{source}: expected header 'notification_date,entry_date', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rdr.records() {
            let row_err = |line: u64, message: String| Error::Row {
                path: source.to_string(),
                line,
                message,
            };
            let row = row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                row_err(line, e.to_string())
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 2 {
                return Err(row_err(line, format!("expected 2 fields, found {}", row.len())));
            }
            let n = parse_date(&row[0]).map_err(|e| row_err(line, e.to_string()))?;
            let e = parse_date(&row[1]).map_err(|e| row_err(line, e.to_string()))?;
            records.push(CaseRecord::new(n, e).map_err(|e| row_err(line, e.to_string()))?);
        }
        Ok(Self { records })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["notification_date", "entry_date"])
            .and_then(|_| {
                for r in &self.records {
                    w.write_record([
                        r.notification_date.format("%Y-%m-%d").to_string(),
                        r.entry_date.format("%Y-%m-%d").to_string(),
                    ])?;
                }
                w.flush().map_err(csv::Error::from)
            })
            .map_err(|e| Error::Internal(format!("writing line list: {e}")))
    }
}

impl FromIterator<CaseRecord> for LineList {
    fn from_iter<I: IntoIterator<Item = CaseRecord>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Whole weeks between notification and entry of a case.
pub fn delay_weeks(c: &CaseRecord) -> Result<u32> {
    c.delay_weeks()
}
