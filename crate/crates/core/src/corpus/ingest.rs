//! CSV ingestion for raw tickets.
//!
//! The reader is streaming: rows are surfaced one at a time so callers can
//! drop bad rows without aborting the whole load. Column positions are
//! resolved once from the header via a [`ColumnMap`].

use std::fs::File;
use std::path::Path;

use super::{CorpusError, RawTicket};

/// Maps logical ticket fields onto CSV header names.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub subject: String,
    pub body: String,
    pub label: String,
    /// Optional language column; `None` disables the language filter.
    pub language: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            subject: "subject".to_string(),
            body: "body".to_string(),
            label: "type".to_string(),
            language: Some("language".to_string()),
        }
    }
}

/// Streaming iterator over CSV rows, yielding one [`RawTicket`] per data row.
pub struct TicketReader {
    records: csv::StringRecordsIntoIter<File>,
    subject_idx: usize,
    body_idx: usize,
    label_idx: usize,
    language_idx: Option<usize>,
    /// 1-based data row counter (header excluded).
    next_row: usize,
}

/// Open a ticket CSV and resolve the header against `columns`.
///
/// Missing `subject`/`body`/`label` columns are an error; a missing language
/// column just disables the language filter.
pub fn load_csv(path: &Path, columns: &ColumnMap) -> Result<TicketReader, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let headers = reader.headers().map_err(|source| CorpusError::MalformedRow {
        row: 0,
        message: source.to_string(),
    })?;

    let find = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        find(name).ok_or_else(|| CorpusError::MissingColumn {
            name: name.to_string(),
        })
    };

    let subject_idx = require(&columns.subject)?;
    let body_idx = require(&columns.body)?;
    let label_idx = require(&columns.label)?;
    let language_idx = columns.language.as_deref().and_then(find);

    Ok(TicketReader {
        records: reader.into_records(),
        subject_idx,
        body_idx,
        label_idx,
        language_idx,
        next_row: 1,
    })
}

impl Iterator for TicketReader {
    type Item = Result<RawTicket, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.next_row;
        self.next_row += 1;
        let record = match self.records.next()? {
            Ok(record) => record,
            Err(source) => {
                return Some(Err(CorpusError::MalformedRow {
                    row,
                    message: source.to_string(),
                }));
            }
        };
        // Short rows are tolerated: absent cells read as empty and fall out
        // later as drop reasons rather than hard errors.
        let cell = |idx: usize| record.get(idx).unwrap_or("").to_string();
        let language_tag = self.language_idx.and_then(|idx| {
            let tag = record.get(idx).unwrap_or("").trim();
            if tag.is_empty() {
                None
            } else {
                Some(tag.to_string())
            }
        });
        Some(Ok(RawTicket {
            subject: cell(self.subject_idx),
            body: cell(self.body_idx),
            label_text: cell(self.label_idx),
            language_tag,
            source_row: row,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file.flush().unwrap();
        file
    }

    #[test]
    fn reads_rows_with_default_columns() {
        let file = write_csv(
            "subject,body,type,language\n\
             Printer down,paper jam,Problem,en\n\
             New laptop,for the intern,Request,\n",
        );
        let rows: Vec<RawTicket> = load_csv(file.path(), &ColumnMap::default())
            .unwrap()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].subject, "Printer down");
        assert_eq!(rows[0].label_text, "Problem");
        assert_eq!(rows[0].language_tag.as_deref(), Some("en"));
        assert_eq!(rows[0].source_row, 1);
        // Empty language cell reads back as absent.
        assert_eq!(rows[1].language_tag, None);
        assert_eq!(rows[1].source_row, 2);
    }

    #[test]
    fn missing_required_column_is_an_error() {
        let file = write_csv("subject,body\nx,y\n");
        let err = match load_csv(file.path(), &ColumnMap::default()) {
            Err(err) => err,
            Ok(_) => panic!("expected missing column error"),
        };
        assert!(matches!(err, CorpusError::MissingColumn { ref name } if name == "type"));
    }

    #[test]
    fn missing_language_column_disables_filter() {
        let file = write_csv("subject,body,type\nx,y,Problem\n");
        let rows: Vec<RawTicket> = load_csv(file.path(), &ColumnMap::default())
            .unwrap()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(rows[0].language_tag, None);
    }

    #[test]
    fn custom_column_names_are_honored() {
        let file = write_csv("title,text,category\nVPN,down again,Problem\n");
        let columns = ColumnMap {
            subject: "title".to_string(),
            body: "text".to_string(),
            label: "category".to_string(),
            language: None,
        };
        let rows: Vec<RawTicket> = load_csv(file.path(), &columns)
            .unwrap()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(rows[0].subject, "VPN");
        assert_eq!(rows[0].label_text, "Problem");
    }

    #[test]
    fn short_rows_read_missing_cells_as_empty() {
        let file = write_csv("subject,body,type\nonly subject\n");
        let rows: Vec<RawTicket> = load_csv(file.path(), &ColumnMap::default())
            .unwrap()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(rows[0].subject, "only subject");
        assert_eq!(rows[0].body, "");
        assert_eq!(rows[0].label_text, "");
    }

    #[test]
    fn invalid_utf8_reports_row_number() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(b"subject,body,type\nok,fine,Problem\n\xff\xfe,bad,Problem\n")
            .unwrap();
        file.flush().unwrap();
        let results: Vec<_> = load_csv(file.path(), &ColumnMap::default()).unwrap().collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(CorpusError::MalformedRow { row, .. }) => assert_eq!(*row, 2),
            other => panic!("expected malformed row, got {other:?}"),
        }
    }
}
