use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{ColumnChunk, DataMatrix};
use crate::error::{GlimmerError, Result};
use crate::scalar::Scalar;

/// Dense table parsed from CSV text.
struct Table<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    header: Option<Vec<String>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GlimmerError + '_ {
    move |source| GlimmerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse comma separated numbers. A first row in which no cell parses as a
/// number is taken as a header. Reported rows and columns are 1-based
/// positions in the file.
fn parse_table<T: Scalar, R: Read>(reader: R) -> Result<Table<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header = None;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in rdr.records().enumerate() {
        let row = line + 1;
        let record = record.map_err(|e| GlimmerError::Parse {
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if line == 0 && record.iter().all(|cell| cell.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            cols = Some(record.len());
            continue;
        }
        let expected = *cols.get_or_insert(record.len());
        if record.len() != expected {
            return Err(GlimmerError::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v = T::parse_decimal(cell).ok_or_else(|| GlimmerError::Parse {
                row,
                col: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(GlimmerError::Parse {
                    row,
                    col: c + 1,
                    message: format!("non-finite value: {cell:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(GlimmerError::Empty("no data rows".into()));
    }
    Ok(Table {
        rows,
        cols: cols.unwrap_or(0),
        values,
        header,
    })
}

pub(crate) fn parse_csv_matrix<T: Scalar, R: Read>(
    reader: R,
    chunk_width: usize,
) -> Result<DataMatrix<T>> {
    if chunk_width == 0 {
        return Err(GlimmerError::InvalidConfig("chunk width must be >= 1".into()));
    }
    let t = parse_table::<T, _>(reader)?;
    DataMatrix::from_row_major(&t.values, t.rows, t.cols, chunk_width, t.header.as_deref())
}

/// Load a rectangular numeric CSV (rows are points, columns dimensions),
/// partitioned into chunks of `chunk_width` columns. No chunk is active.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, chunk_width: usize) -> Result<DataMatrix<T>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_csv_matrix(std::io::BufReader::new(file), chunk_width)
}

/// Load every `*.csv` in a directory as one chunk, in lexicographic
/// filename order. Each chunk is labeled with its filename.
pub fn load_chunk_dir<T: Scalar>(path: impl AsRef<Path>) -> Result<DataMatrix<T>> {
    let path = path.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(GlimmerError::Empty(format!(
            "no .csv files in {}",
            path.display()
        )));
    }

    let mut matrix: Option<DataMatrix<T>> = None;
    for file in &files {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let handle = fs::File::open(file).map_err(io_err(file))?;
        let t = parse_table::<T, _>(std::io::BufReader::new(handle))?;
        let m = match &mut matrix {
            Some(m) => m,
            None => matrix.insert(DataMatrix::new(t.rows)?),
        };
        if t.rows != m.point_count() {
            return Err(GlimmerError::RowCountMismatch {
                source_name: name,
                expected: m.point_count(),
                found: t.rows,
            });
        }
        m.insert(ColumnChunk::new(t.values, t.cols, Some(name))?)?;
    }
    Ok(matrix.expect("at least one file"))
}

/// Write row-major values as CSV with a `d0,d1,...` header.
pub fn write_csv<T: Scalar, W: Write>(out: W, values: &[T], dims: usize) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let header: Vec<String> = (0..dims).map(|c| format!("d{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in values.chunks(dims) {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}
