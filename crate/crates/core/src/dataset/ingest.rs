use std::fmt;
use std::io::{BufRead, Write};

use super::{Dataset, DatasetError, ListeningEvent};

/// A record that could not be parsed. Line numbers are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MalformedRecord {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for MalformedRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Data lines seen (comments and blank lines excluded).
    pub records: usize,
    pub malformed: Vec<MalformedRecord>,
    /// Records dropped because an identical event was already stored.
    pub duplicates: usize,
}

/// Parses one tab-separated event line:
/// `user_id \t artist_name \t track_title \t timestamp`.
pub fn parse_event_line(line: &str) -> Result<ListeningEvent, String> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let timestamp: u64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("invalid timestamp {:?}", fields[3]))?;
    ListeningEvent::new(fields[0], fields[1], fields[2], timestamp).map_err(|e| match e {
        DatasetError::InvalidEvent(reason) => reason,
        other => other.to_string(),
    })
}

/// Ingests raw event lines. Malformed records are collected in the report;
/// the call only fails when more than half of the data lines are malformed.
pub fn ingest_events<I, S>(lines: I) -> Result<(Dataset, IngestReport), DatasetError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut report = IngestReport::default();
    let mut events = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        match parse_event_line(line) {
            Ok(event) => events.push(event),
            Err(reason) => report.malformed.push(MalformedRecord { line: i + 1, reason }),
        }
    }
    if report.malformed.len() * 2 > report.records {
        return Err(DatasetError::TooManyMalformed {
            malformed: report.malformed.len(),
            total: report.records,
            first: report.malformed[0].clone(),
        });
    }
    let parsed = events.len();
    let dataset = Dataset::from_events(events);
    report.duplicates = parsed - dataset.n_events();
    Ok((dataset, report))
}

pub fn ingest_reader<R: BufRead>(reader: R) -> Result<(Dataset, IngestReport), DatasetError> {
    let lines = reader.lines().collect::<Result<Vec<_>, _>>()?;
    ingest_events(lines)
}

/// Writes events in the tab-separated events-file format, one per line, no header.
pub fn write_events<W: Write>(mut out: W, events: &[ListeningEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            e.user_id, e.artist_name, e.track_title, e.timestamp
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_empty_dataset() {
        let (ds, report) = ingest_events(Vec::<String>::new()).unwrap();
        assert_eq!((ds.n_users(), ds.n_tracks(), ds.n_events()), (0, 0, 0));
        assert_eq!(report.records, 0);
    }

    #[test]
    fn duplicate_records_collapse() {
        let line = "u1\tArtist\tSong\t100";
        let (ds, report) = ingest_events([line, line]).unwrap();
        assert_eq!(ds.n_events(), 1);
        assert_eq!(report.duplicates, 1);
    }

    #[test]
    fn repeated_plays_at_different_times_are_distinct() {
        let (ds, _) = ingest_events(["u\ta\tt\t1", "u\ta\tt\t2"]).unwrap();
        assert_eq!(ds.n_events(), 2);
        assert_eq!(ds.n_tracks(), 1);
    }

    #[test]
    fn comments_and_whitespace() {
        let lines = ["# header comment", "", "u1\t  Artist \tSong\t5\r"];
        let (ds, report) = ingest_events(lines).unwrap();
        assert_eq!(report.records, 1);
        assert_eq!(ds.events()[0].artist_name, "Artist");
        assert_eq!(ds.events()[0].timestamp, 5);
    }

    #[test]
    fn malformed_reported_with_line_numbers() {
        let lines = ["u\ta\tt\t1", "u\ta\tt", "u\ta\tt\t3", "u\t \tt\t4", "u\ta\tb\t9"];
        let (ds, report) = ingest_events(lines).unwrap();
        assert_eq!(ds.n_events(), 3);
        let bad: Vec<usize> = report.malformed.iter().map(|m| m.line).collect();
        assert_eq!(bad, vec![2, 4]);
    }

    #[test]
    fn majority_malformed_is_fatal() {
        let lines = ["u\ta\tt\t1", "garbage", "u\ta\tt\t-5"];
        assert!(matches!(
            ingest_events(lines),
            Err(DatasetError::TooManyMalformed {
                malformed: 2,
                total: 3,
                ..
            })
        ));
        // exactly half is tolerated
        assert!(ingest_events(["u\ta\tt\t1", "bad"]).is_ok());
    }

    #[test]
    fn nfc_equivalent_names_share_a_track() {
        // "é" precomposed vs "e" + combining acute
        let (ds, _) = ingest_events(["u\tBeyonc\u{e9}\tHalo\t1", "u\tBeyonce\u{301}\tHalo\t2"]).unwrap();
        assert_eq!(ds.n_tracks(), 1);
    }

    #[test]
    fn case_differences_are_distinct_tracks() {
        let (ds, _) = ingest_events(["u\tabba\tSOS\t1", "u\tABBA\tSOS\t1"]).unwrap();
        assert_eq!(ds.n_tracks(), 2);
    }

    #[test]
    fn write_then_ingest_preserves_events() {
        let (ds, _) = ingest_events(["a\tX\tY\t1", "b\tX\tZ\t2"]).unwrap();
        let mut buf = Vec::new();
        write_events(&mut buf, ds.events()).unwrap();
        let (again, _) = ingest_reader(buf.as_slice()).unwrap();
        assert_eq!(again, ds);
    }
}
