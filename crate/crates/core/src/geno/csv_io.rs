//! CSV readers and writers for genotype and phenotype tables.
//!
//! Genotype files carry a header of SNP identifiers and one row per sample,
//! with cells in `{0, 1, 2, 5}` or the call tokens `AA`, `AB`, `BB`, `Null`
//! (any casing). Phenotype files carry a header of trait names; an empty cell
//! or `NA` marks a missing measurement. Both accept LF or CRLF line endings.

use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use super::types::{GenotypeMatrix, PhenotypeTable, MISSING_CODE};
use crate::error::{Error, Result};

/// Maps one call token to its integer code.
pub fn encode_call(token: &str) -> Option<u8> {
    let t = token.trim();
    if t.eq_ignore_ascii_case("AA") {
        Some(0)
    } else if t.eq_ignore_ascii_case("AB") {
        Some(1)
    } else if t.eq_ignore_ascii_case("BB") {
        Some(2)
    } else if t.eq_ignore_ascii_case("Null") {
        Some(MISSING_CODE)
    } else {
        match t {
            "0" => Some(0),
            "1" => Some(1),
            "2" => Some(2),
            "5" => Some(MISSING_CODE),
            _ => None,
        }
    }
}

/// Encodes a single row of call tokens; errors report a 1-based column.
pub fn encode_calls<S: AsRef<str>>(tokens: &[S]) -> Result<Vec<u8>> {
    tokens
        .iter()
        .enumerate()
        .map(|(j, tok)| {
            encode_call(tok.as_ref()).ok_or_else(|| Error::Parse {
                line: 1,
                column: j + 1,
                message: format!("unrecognized genotype call {:?}", tok.as_ref()),
            })
        })
        .collect()
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(source)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn read_header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            column: 0,
            message: "empty file: missing header row".into(),
        });
    }
    Ok(header.iter().map(str::to_owned).collect())
}

fn record_line(rec: &StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

pub fn parse_genotype_csv<R: Read>(source: R) -> Result<GenotypeMatrix> {
    let mut rdr = reader(source);
    let snp_ids = read_header(&mut rdr)?;
    let snps = snp_ids.len();
    let mut codes = Vec::new();
    let mut samples = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec, i + 2);
        if rec.len() != snps {
            return Err(Error::Parse {
                line,
                column: rec.len().min(snps) + 1,
                message: format!("ragged row: expected {snps} cells, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let code = encode_call(cell).ok_or_else(|| Error::Parse {
                line,
                column: j + 1,
                message: format!("unrecognized genotype call {cell:?}"),
            })?;
            codes.push(code);
        }
        samples += 1;
    }
    if samples == 0 {
        return Err(Error::Parse {
            line: 2,
            column: 0,
            message: "no sample rows".into(),
        });
    }
    let observed = codes.iter().map(|&c| c != MISSING_CODE).collect();
    GenotypeMatrix::new(samples, snps, snp_ids, codes, observed)
}

/// Writes the integer encoding, missing cells as `5`.
pub fn write_genotype_csv<W: Write>(g: &GenotypeMatrix, sink: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(g.snp_ids()).map_err(csv_write_error)?;
    let mut row = Vec::with_capacity(g.snps());
    for u in 0..g.samples() {
        row.clear();
        row.extend(g.row_codes(u).iter().map(|c| c.to_string()));
        w.write_record(&row).map_err(csv_write_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}

fn csv_write_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv sink>", io),
        other => Error::Data(format!("csv write failed: {other:?}")),
    }
}

fn is_missing_cell(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("NA")
}

pub fn parse_phenotype_csv<R: Read>(source: R) -> Result<PhenotypeTable> {
    let mut rdr = reader(source);
    let trait_names = read_header(&mut rdr)?;
    let traits = trait_names.len();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut samples = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec, i + 2);
        if rec.len() != traits {
            return Err(Error::Parse {
                line,
                column: rec.len().min(traits) + 1,
                message: format!("ragged row: expected {traits} cells, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if is_missing_cell(cell) {
                values.push(f64::NAN);
                observed.push(false);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("non-numeric trait value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("non-finite trait value {cell:?}"),
                });
            }
            values.push(v);
            observed.push(true);
        }
        samples += 1;
    }
    PhenotypeTable::new(samples, trait_names, values, observed)
}

/// Writes trait values with shortest round-trip formatting, missing as `NA`.
pub fn write_phenotype_csv<W: Write>(p: &PhenotypeTable, sink: W) -> Result<()> {
    let mut w = WriterBuilder::new().from_writer(sink);
    w.write_record(p.trait_names()).map_err(csv_write_error)?;
    for u in 0..p.samples() {
        let row: Vec<String> = (0..p.traits())
            .map(|t| {
                p.get(u, t)
                    .map_or_else(|| "NA".to_owned(), |v| v.to_string())
            })
            .collect();
        w.write_record(&row).map_err(csv_write_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv sink>", e))?;
    Ok(())
}
