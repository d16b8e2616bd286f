use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::{Event, InteractionLog};
use crate::{Error, Result};

/// Column layout of a delimited event file.
#[derive(Debug, Clone)]
pub struct Schema {
    pub delimiter: u8,
    pub user_column: usize,
    pub item_column: usize,
    pub time_column: usize,
    pub has_header: bool,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: b',',
            user_column: 0,
            item_column: 1,
            time_column: 2,
            has_header: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows: usize,
    pub events: usize,
    pub malformed: usize,
}

/// Opens a file for reading, transparently decompressing gzip.
pub fn open_source(path: &Path) -> Result<Box<dyn Read>> {
    let unreadable = |source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(unreadable)?;
    let mut reader = BufReader::new(file);
    let is_gzip = reader
        .fill_buf()
        .map_err(unreadable)?
        .starts_with(&[0x1f, 0x8b]);
    if is_gzip {
        Ok(Box::new(MultiGzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn parse_row(rec: &csv::StringRecord, schema: &Schema) -> std::result::Result<Event, String> {
    let field = |k: usize, what: &str| {
        rec.get(k)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing {what} column {k}"))
    };
    let user = field(schema.user_column, "user")?;
    let item = field(schema.item_column, "item")?;
    let ts = field(schema.time_column, "timestamp")?;
    let timestamp: f64 = ts.parse().map_err(|_| format!("bad timestamp {ts:?}"))?;
    if !timestamp.is_finite() {
        return Err(format!("non-finite timestamp {ts:?}"));
    }
    Ok(Event::new(user, item, timestamp))
}

/// Parses delimited `(user, item, timestamp)` rows. Malformed rows are
/// counted and skipped; more than half malformed is an error.
pub fn ingest_events<R: Read>(
    source: R,
    schema: &Schema,
) -> Result<(InteractionLog, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);

    let mut events = Vec::new();
    let mut report = IngestReport::default();
    let mut first_bad: Option<(usize, String)> = None;
    for (line, rec) in reader.records().enumerate() {
        report.rows += 1;
        let parsed = match rec {
            Ok(rec) => parse_row(&rec, schema),
            Err(e) if e.is_io_error() => match e.into_kind() {
                csv::ErrorKind::Io(io) => return Err(Error::Io(io)),
                _ => unreachable!(),
            },
            Err(e) => Err(e.to_string()),
        };
        match parsed {
            Ok(ev) => events.push(ev),
            Err(reason) => {
                report.malformed += 1;
                first_bad.get_or_insert((line + 1, reason));
            }
        }
    }
    report.events = events.len();

    if report.rows == 0 {
        log::warn!("event source is empty");
    } else if report.malformed * 2 > report.rows {
        let (first_line, reason) = first_bad.unwrap_or_default();
        return Err(Error::TooManyMalformed {
            rows: report.rows,
            malformed: report.malformed,
            first_line,
            reason,
        });
    } else if report.malformed > 0 {
        log::warn!(
            "skipped {} malformed rows of {}",
            report.malformed,
            report.rows
        );
    }
    log::info!(
        "ingested {} events from {} rows",
        report.events,
        report.rows
    );
    Ok((InteractionLog::new(events), report))
}
