//! MovieLens `ratings.csv` reader.

use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = ["userId", "movieId", "rating", "timestamp"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user_id: u64,
    pub movie_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

/// Parsed ratings, in file order, without duplicate `(user, movie)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingsTable {
    pub records: Vec<Rating>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableCounts {
    pub ratings: usize,
    pub users: usize,
    pub movies: usize,
}

impl RatingsTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> TableCounts {
        let users: HashSet<u64> = self.records.iter().map(|r| r.user_id).collect();
        let movies: HashSet<u64> = self.records.iter().map(|r| r.movie_id).collect();
        TableCounts {
            ratings: self.records.len(),
            users: users.len(),
            movies: movies.len(),
        }
    }

    /// Writes the table in the same CSV schema it is read from.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(HEADER).map_err(|e| csv_io(path, e))?;
        for r in &self.records {
            w.write_record([
                r.user_id.to_string(),
                r.movie_id.to_string(),
                format!("{:?}", r.rating),
                r.timestamp.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

pub fn load_movielens_csv(path: impl AsRef<Path>) -> Result<RatingsTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, path)
}

/// Parses ratings from any reader; `origin` only labels error messages.
pub fn read_ratings<R: Read>(reader: R, origin: &Path) -> Result<RatingsTable> {
    let origin: PathBuf = origin.into();
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => return Err(parse_err(1, "missing header row".into())),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        Some(Ok(header)) => {
            let fields: Vec<&str> = header.iter().map(|f| f.trim_start_matches('\u{feff}')).collect();
            if fields != HEADER {
                return Err(parse_err(1, format!("expected header `{}`, found `{}`", HEADER.join(","), fields.join(","))));
            }
        }
    }

    let mut table = RatingsTable::default();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let field = |i: usize| rec[i].trim();
        let user_id = field(0)
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("userId {:?}: {e}", field(0))))?;
        let movie_id = field(1)
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("movieId {:?}: {e}", field(1))))?;
        let rating = field(2)
            .parse::<f64>()
            .ok()
            .filter(|r| r.is_finite())
            .ok_or_else(|| parse_err(line, format!("rating {:?} is not a finite number", field(2))))?;
        let timestamp = field(3)
            .parse::<i64>()
            .map_err(|e| parse_err(line, format!("timestamp {:?}: {e}", field(3))))?;
        if !seen.insert((user_id, movie_id)) {
            return Err(parse_err(line, format!("duplicate rating for user {user_id}, movie {movie_id}")));
        }
        table.records.push(Rating {
            user_id,
            movie_id,
            rating,
            timestamp,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RatingsTable> {
        read_ratings(text.as_bytes(), Path::new("fixture.csv"))
    }

    #[test]
    fn two_rows() {
        let t = parse("userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n1,1029,3.0,1260759179\n").unwrap();
        assert_eq!(
            t.records,
            vec![
                Rating {
                    user_id: 1,
                    movie_id: 31,
                    rating: 2.5,
                    timestamp: 1260759144
                },
                Rating {
                    user_id: 1,
                    movie_id: 1029,
                    rating: 3.0,
                    timestamp: 1260759179
                },
            ]
        );
        assert_eq!(t.counts(), TableCounts { ratings: 2, users: 1, movies: 2 });
    }

    #[test]
    fn header_only_is_empty() {
        let t = parse("userId,movieId,rating,timestamp\n").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.counts(), TableCounts { ratings: 0, users: 0, movies: 0 });
    }

    #[test]
    fn missing_header_fails_at_line_one() {
        match parse("1,31,2.5,1260759144\n") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "userId,movieId,rating,timestamp\n1,2,3.0,4\n1,x,3.0,4\n";
        match parse(text) {
            Err(Error::Parse { line: 3, message, .. }) => assert!(message.contains("movieId")),
            other => panic!("unexpected {other:?}"),
        }
        match parse("userId,movieId,rating,timestamp\n1,2,3.0\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected() {
        let text = "userId,movieId,rating,timestamp\n1,2,3.0,4\n1,2,4.0,5\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_movielens_csv("/nonexistent/ratings.csv"), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let t = parse("userId,movieId,rating,timestamp\n7,8,0.5,9\n7,9,5.0,10\n").unwrap();
        t.write_csv(&p).unwrap();
        assert_eq!(load_movielens_csv(&p).unwrap(), t);
    }
}
