//! Matrix files: one complex matrix per block, blocks separated by blank
//! lines, entries separated by whitespace. Entries use the `a+bi` notation
//! (`1`, `-0.5i`, `0.3-1.2i`); `#` starts a comment.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use marc_core::linalg::CMatrix;
use num_complex::Complex64;

pub fn parse_blocks(text: &str) -> Result<Vec<CMatrix>, String> {
    let mut blocks = Vec::new();
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    let mut flush = |rows: &mut Vec<Vec<Complex64>>, line: usize| -> Result<(), String> {
        if rows.is_empty() {
            return Ok(());
        }
        let cols = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(format!(
                "block ending before line {line}: row of {} entries in a {cols}-column matrix",
                bad.len()
            ));
        }
        let entries: Vec<Complex64> = rows.drain(..).flatten().collect();
        blocks.push(CMatrix::from_row_slice(entries.len() / cols, cols, &entries));
        Ok(())
    };
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // comment-only lines do not end a block
            if raw.trim().is_empty() {
                flush(&mut rows, no + 1)?;
            }
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| Complex64::from_str(tok).map_err(|_| format!("line {}: bad complex entry {tok:?}", no + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    flush(&mut rows, text.lines().count() + 1)?;
    Ok(blocks)
}

pub fn read_blocks(path: &Path) -> Result<Vec<CMatrix>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_blocks(&text).map_err(|e| format!("{}: {e}", path.display()))
}
