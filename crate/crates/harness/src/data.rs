//! Search-session CSV files.
//!
//! Schema (header required, UTF-8, comma separated), one row per option shown:
//!
//! ```text
//! session_id,option_rank,stars,review,location,chain,promotion,log_price,searched,bought
//! ```
//!
//! `searched` and `bought` are 0 or 1. The search order is not recorded; on
//! ingestion searched options are taken in rank order.

use std::collections::HashMap;
use std::path::Path;

use nne_core::search::{ConsumerGrid, OptionAttributes, SearchOutcome};
use nne_core::RngStream;
use rand::Rng;

use crate::error::{HarnessError, Result};

pub const SEARCH_CSV_HEADER: [&str; 10] = [
    "session_id",
    "option_rank",
    "stars",
    "review",
    "location",
    "chain",
    "promotion",
    "log_price",
    "searched",
    "bought",
];

/// Sessions as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchData {
    pub session_ids: Vec<String>,
    pub grid: ConsumerGrid,
    pub outcomes: Vec<SearchOutcome>,
}

struct OptionRow {
    row: usize,
    rank: u32,
    attrs: OptionAttributes,
    searched: bool,
    bought: bool,
}

fn parse_flag(s: &str, row: usize, col: &str) -> Result<bool> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(HarnessError::Parse {
            row,
            reason: format!("{col} must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Parses and validates search sessions from CSV text. Rows are numbered from
/// 1 at the header.
pub fn parse_search_csv(text: &str) -> Result<SearchData> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd
        .headers()
        .map_err(|e| HarnessError::Parse { row: 1, reason: e.to_string() })?;
    if header.iter().map(str::trim).ne(SEARCH_CSV_HEADER) {
        return Err(HarnessError::Parse {
            row: 1,
            reason: format!("header must be {}", SEARCH_CSV_HEADER.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut sessions: HashMap<String, Vec<OptionRow>> = HashMap::new();
    for (k, rec) in rd.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| HarnessError::Parse { row, reason: e.to_string() })?;
        if rec.len() != SEARCH_CSV_HEADER.len() {
            return Err(HarnessError::Parse {
                row,
                reason: format!("expected {} fields, got {}", SEARCH_CSV_HEADER.len(), rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(HarnessError::Parse { row, reason: "empty session_id".into() });
        }
        let rank: u32 = rec[1].trim().parse().map_err(|_| HarnessError::Parse {
            row,
            reason: format!("option_rank must be a positive integer, got {:?}", &rec[1]),
        })?;
        let mut a = [0.0; 6];
        for (c, v) in a.iter_mut().enumerate() {
            let field = &rec[c + 2];
            *v = field.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| HarnessError::Parse {
                row,
                reason: format!("{} must be a finite number, got {field:?}", SEARCH_CSV_HEADER[c + 2]),
            })?;
        }
        let searched = parse_flag(&rec[8], row, "searched")?;
        let bought = parse_flag(&rec[9], row, "bought")?;
        if !sessions.contains_key(&id) {
            order.push(id.clone());
        }
        sessions.entry(id).or_default().push(OptionRow {
            row,
            rank,
            attrs: OptionAttributes(a),
            searched,
            bought,
        });
    }
    if order.is_empty() {
        return Err(HarnessError::Parse { row: 2, reason: "no sessions".into() });
    }
    let mut consumers = Vec::with_capacity(order.len());
    let mut outcomes = Vec::with_capacity(order.len());
    for id in &order {
        let opts = &sessions[id];
        let j = opts.len();
        let bad = |row: usize, reason: String| HarnessError::Validation {
            row,
            session: id.clone(),
            reason,
        };
        let mut seen = vec![false; j];
        for o in opts {
            let idx = (o.rank as usize).wrapping_sub(1);
            if idx >= j || seen[idx] {
                return Err(bad(o.row, format!("option ranks must be a permutation of 1..={j}; rank {} is out of range or repeated", o.rank)));
            }
            seen[idx] = true;
            if o.bought && !o.searched {
                return Err(bad(o.row, "option bought without being searched".into()));
            }
        }
        let buys: Vec<&OptionRow> = opts.iter().filter(|o| o.bought).collect();
        if buys.len() > 1 {
            return Err(bad(buys[1].row, "more than one option bought".into()));
        }
        let mut searched: Vec<usize> = (0..j).filter(|&l| opts[l].searched).collect();
        if searched.is_empty() {
            return Err(bad(opts[0].row, "session has no search".into()));
        }
        searched.sort_by_key(|&l| opts[l].rank);
        outcomes.push(SearchOutcome {
            search_order: searched,
            bought: opts.iter().position(|o| o.bought),
        });
        consumers.push(opts.iter().map(|o| (o.attrs, o.rank)).collect());
    }
    let grid = ConsumerGrid::from_consumers(consumers)?;
    Ok(SearchData {
        session_ids: order,
        grid,
        outcomes,
    })
}

pub fn ingest_search_csv(path: &Path) -> Result<SearchData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_search_csv(&text)
}

/// Writes sessions `1..=n` in the grid's option order.
pub fn search_csv_string(grid: &ConsumerGrid, outcomes: &[SearchOutcome]) -> Result<String> {
    if outcomes.len() != grid.n_consumers() {
        return Err(HarnessError::Config(format!(
            "{} outcomes for {} consumers",
            outcomes.len(),
            grid.n_consumers()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(SEARCH_CSV_HEADER).map_err(err)?;
    for (i, o) in outcomes.iter().enumerate() {
        let searched = o.searched_mask(grid.n_options(i));
        for (l, (a, r)) in grid.attributes(i).iter().zip(grid.ranks(i)).enumerate() {
            let mut rec = vec![(i + 1).to_string(), r.to_string()];
            rec.extend(a.values().iter().map(|v| v.to_string()));
            rec.push((searched[l] as u8).to_string());
            rec.push(((o.bought == Some(l)) as u8).to_string());
            w.write_record(&rec).map_err(err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Synthetic stand-in for the real data: `n` sessions, each showing `j_max`
/// or `j_max - 1` options with equal probability.
pub fn synthetic_real_grid(n: usize, j_max: usize, stream: &RngStream) -> Result<ConsumerGrid> {
    let full = nne_core::search::generate_covariates(n, j_max, &stream.substream(0))?;
    let mut rng = stream.substream(1).rng();
    let consumers = (0..n)
        .map(|i| {
            let keep = if rng.random_bool(0.5) { j_max } else { j_max - 1 };
            full.attributes(i)
                .iter()
                .zip(full.ranks(i))
                .filter(|(_, r)| (**r as usize) <= keep)
                .map(|(a, r)| (*a, *r))
                .collect()
        })
        .collect();
    Ok(ConsumerGrid::from_consumers(consumers)?)
}
