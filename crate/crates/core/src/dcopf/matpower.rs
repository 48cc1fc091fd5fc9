//! Reader for the subset of the MATPOWER case format needed by DCOPF.
//!
//! Recognized assignments are `mpc.baseMVA` and the `mpc.bus`, `mpc.gen`,
//! `mpc.branch` and `mpc.gencost` matrices. Everything else (functions,
//! `mpc.version`, extra matrices) is ignored. `%` starts a comment, rows are
//! separated by `;` or newlines, and entries by whitespace or commas.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};

use super::{Branch, Bus, Generator, PowerNetwork};

// Column indices (zero based) of the MATPOWER tables.
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_STATUS: usize = 7;
const PMAX: usize = 8;
const PMIN: usize = 9;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_X: usize = 3;
const RATE_A: usize = 5;
const TAP: usize = 8;
const BR_STATUS: usize = 10;

const REF_BUS: u32 = 3;
const ISOLATED_BUS: u32 = 4;

struct Table {
    /// Line of the opening `[`.
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    fn check_width(&self, name: &str, min: usize) -> Result<()> {
        for (line, row) in &self.rows {
            if row.len() < min {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("mpc.{name} row has {} columns, need at least {min}", row.len()),
                });
            }
        }
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('%').next().unwrap_or("")
}

fn parse_row(text: &str, line: usize) -> Result<Option<Vec<f64>>> {
    let toks: Vec<&str> = text
        .split(|ch: char| ch.is_whitespace() || ch == ',')
        .filter(|t| !t.is_empty())
        .collect();
    if toks.is_empty() {
        return Ok(None);
    }
    toks.iter()
        .map(|t| {
            let v = match *t {
                "Inf" | "inf" => f64::INFINITY,
                "-Inf" | "-inf" => f64::NEG_INFINITY,
                _ => t.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("cannot parse number {t:?}"),
                })?,
            };
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn read_tables(text: &str) -> Result<(Option<f64>, HashMap<String, Table>)> {
    let mut base_mva = None;
    let mut tables: HashMap<String, Table> = HashMap::new();
    let mut open: Option<(String, Table)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut rest = strip_comment(raw).trim();
        if open.is_none() {
            let Some(assign) = rest.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, rhs)) = assign.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let rhs = rhs.trim();
            if name == "baseMVA" {
                let v = rhs.trim_end_matches(';').trim();
                base_mva = Some(v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("cannot parse baseMVA {v:?}"),
                })?);
                continue;
            }
            let Some(body) = rhs.strip_prefix('[') else {
                continue;
            };
            if tables.contains_key(name) {
                return Err(Error::Parse {
                    line,
                    msg: format!("mpc.{name} defined twice"),
                });
            }
            open = Some((name.to_string(), Table { line, rows: Vec::new() }));
            rest = body;
        }
        let (name, table) = open.as_mut().expect("inside a matrix");
        let (body, closed) = match rest.split_once(']') {
            Some((body, _)) => (body, true),
            None => (rest, false),
        };
        for chunk in body.split(';') {
            if let Some(row) = parse_row(chunk, line)? {
                table.rows.push((line, row));
            }
        }
        if closed {
            let (name, table) = open.take().expect("inside a matrix");
            tables.insert(name, table);
        } else if rest.contains("mpc.") {
            return Err(Error::Parse {
                line,
                msg: format!("unterminated matrix mpc.{name}"),
            });
        }
    }
    if let Some((name, table)) = open {
        return Err(Error::Parse {
            line: table.line,
            msg: format!("matrix mpc.{name} is never closed"),
        });
    }
    Ok((base_mva, tables))
}

fn take<'a>(tables: &'a HashMap<String, Table>, name: &str, min_cols: usize) -> Result<&'a Table> {
    let t = tables.get(name).ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("missing table mpc.{name}"),
    })?;
    t.check_width(name, min_cols)?;
    Ok(t)
}

fn as_index(v: f64, line: usize, what: &str) -> Result<u32> {
    if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
        return Err(Error::Parse {
            line,
            msg: format!("{what} must be a non-negative integer, got {v}"),
        });
    }
    Ok(v as u32)
}

/// Linear cost coefficient of a polynomial `gencost` row.
fn linear_cost(row: &[f64], line: usize) -> Result<f64> {
    let model = row[0];
    if model != 2.0 {
        return Err(Error::Unsupported(format!(
            "line {line}: gencost model {model} (only polynomial model 2 is supported)"
        )));
    }
    let ncost = as_index(row[3], line, "NCOST")? as usize;
    let coeffs = row.get(4..4 + ncost).ok_or_else(|| Error::Parse {
        line,
        msg: format!("gencost row declares {ncost} coefficients but has {}", row.len() - 4),
    })?;
    // Highest order first: c_{k-1} ... c_1 c_0
    match ncost {
        0 | 1 => Ok(0.0),
        _ => {
            if let Some(pos) = coeffs[..ncost - 2].iter().position(|&c| c != 0.0) {
                return Err(Error::Unsupported(format!(
                    "line {line}: nonzero cost term of order {} (DCOPF requires linear costs)",
                    ncost - 1 - pos
                )));
            }
            Ok(coeffs[ncost - 2])
        }
    }
}

/// Parses MATPOWER text into a validated [`PowerNetwork`].
///
/// Out-of-service generators and branches and isolated buses (type 4) are
/// dropped. A `RATE_A` of zero means unlimited and is replaced by twice the
/// total generation capacity.
pub fn parse_matpower_case(text: &str) -> Result<PowerNetwork> {
    let (base_mva, tables) = read_tables(text)?;
    let base_mva = base_mva.unwrap_or(100.0);
    let bus_t = take(&tables, "bus", 3)?;
    let gen_t = take(&tables, "gen", 10)?;
    let br_t = take(&tables, "branch", 11)?;
    let cost_t = take(&tables, "gencost", 4)?;

    let mut buses = Vec::new();
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut reference = None;
    let mut isolated = HashSet::new();
    for (line, row) in &bus_t.rows {
        let id = as_index(row[BUS_I], *line, "bus id")?;
        let kind = as_index(row[BUS_TYPE], *line, "bus type")?;
        if kind == ISOLATED_BUS {
            isolated.insert(id);
            continue;
        }
        if index.insert(id, buses.len()).is_some() {
            return Err(Error::Parse {
                line: *line,
                msg: format!("duplicate bus id {id}"),
            });
        }
        if kind == REF_BUS && reference.is_none() {
            reference = Some(buses.len());
        }
        buses.push(Bus { id, pd: row[PD] });
    }

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(Error::Parse {
            line: cost_t.line,
            msg: format!(
                "mpc.gencost has {} rows for {} generators",
                cost_t.rows.len(),
                gen_t.rows.len()
            ),
        });
    }
    let mut generators = Vec::new();
    for ((line, row), (cline, crow)) in gen_t.rows.iter().zip(&cost_t.rows) {
        let bus_id = as_index(row[GEN_BUS], *line, "generator bus")?;
        let Some(&bus) = index.get(&bus_id) else {
            if isolated.contains(&bus_id) {
                continue;
            }
            return Err(Error::Parse {
                line: *line,
                msg: format!("generator at unknown bus {bus_id}"),
            });
        };
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        generators.push(Generator {
            bus,
            cost: linear_cost(crow, *cline)?,
            pmin: row[PMIN],
            pmax: row[PMAX],
        });
    }

    let capacity: f64 = generators.iter().map(|g| g.pmax).sum();
    let mut branches = Vec::new();
    for (line, row) in &br_t.rows {
        if row[BR_STATUS] <= 0.0 {
            continue;
        }
        let from_id = as_index(row[F_BUS], *line, "branch bus")?;
        let to_id = as_index(row[T_BUS], *line, "branch bus")?;
        let (Some(&from), Some(&to)) = (index.get(&from_id), index.get(&to_id)) else {
            return Err(Error::Parse {
                line: *line,
                msg: format!("branch {from_id}-{to_id} touches an unknown or isolated bus"),
            });
        };
        let x = row[BR_X];
        if x == 0.0 || !x.is_finite() {
            return Err(Error::Parse {
                line: *line,
                msg: format!("branch {from_id}-{to_id} has reactance {x}"),
            });
        }
        let tap = if row[TAP] == 0.0 { 1.0 } else { row[TAP] };
        let rate = if row[RATE_A] > 0.0 { row[RATE_A] } else { 2.0 * capacity };
        branches.push(Branch {
            from,
            to,
            susceptance: 1.0 / (x * tap),
            fmin: -rate,
            fmax: rate,
        });
    }

    let slack = match reference {
        Some(s) => s,
        None => {
            let mut cap = vec![0.0; buses.len()];
            for g in &generators {
                cap[g.bus] += g.pmax;
            }
            (0..buses.len())
                .max_by(|&a, &b| cap[a].total_cmp(&cap[b]).then(b.cmp(&a)))
                .ok_or_else(|| Error::Validation("network has no buses".into()))?
        }
    };

    PowerNetwork::new(base_mva, buses, generators, branches, slack)
}

/// True when every bus is reachable from bus 0 through the given branches.
pub(crate) fn is_connected(n_bus: usize, branches: &[Branch]) -> bool {
    if n_bus == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n_bus];
    for br in branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut seen = vec![false; n_bus];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "\
function mpc = tri
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t2\t50\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t3\t1\t100\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t0\t0\t1\t100\t1\t200\t0;
\t2\t0\t0\t0\t0\t1\t100\t1\t200\t0;
\t3\t0\t0\t0\t0\t1\t100\t0\t50\t0;  % offline
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t100\t0\t0\t0\t0\t1;
\t1\t3\t0\t0.1\t0\t80\t0\t0\t0\t0\t1;
\t2\t3\t0\t0.1\t0\t100\t0\t0\t0\t0\t1;
];
mpc.gencost = [
\t2\t0\t0\t2\t10\t0;
\t2\t0\t0\t2\t30\t0;
\t2\t0\t0\t2\t99\t0;
];
";

    #[test]
    fn triangle_case() {
        let net = parse_matpower_case(TRIANGLE).unwrap();
        assert_eq!(net.buses().len(), 3);
        assert_eq!(net.branches().len(), 3);
        assert_eq!(net.generators().len(), 2);
        assert!(net.branches().iter().all(|b| (b.susceptance - 10.0).abs() < 1e-12));
        assert_eq!(net.slack(), 0);
        assert_eq!(net.generators()[1].cost, 30.0);
        assert_eq!(net.branches()[1].fmax, 80.0);
        assert_eq!(net.base_demand().as_slice(), &[0.0, 50.0, 100.0]);
    }

    #[test]
    fn quadratic_cost_rejected() {
        let text = TRIANGLE.replace("2\t0\t0\t2\t30\t0;", "2\t0\t0\t3\t0.01\t30\t0;");
        assert!(matches!(parse_matpower_case(&text), Err(Error::Unsupported(_))));
        // A zero quadratic coefficient is fine.
        let text = TRIANGLE.replace("2\t0\t0\t2\t30\t0;", "2\t0\t0\t3\t0\t30\t0;");
        assert_eq!(parse_matpower_case(&text).unwrap().generators()[1].cost, 30.0);
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = TRIANGLE.replace("\t2\t2\t50", "\t2\t2\tfifty");
        match parse_matpower_case(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn short_row_and_missing_table() {
        let text = TRIANGLE.replace("\t1\t3\t0\t0.1\t0\t80\t0\t0\t0\t0\t1;", "\t1\t3\t0\t0.1;");
        assert!(matches!(parse_matpower_case(&text), Err(Error::Parse { .. })));
        let text = TRIANGLE.replace("mpc.gencost", "mpc.notcost");
        assert!(matches!(parse_matpower_case(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn disconnected_network_rejected() {
        let text = TRIANGLE
            .replace("\t1\t3\t0\t0.1\t0\t80\t0\t0\t0\t0\t1;", "\t1\t3\t0\t0.1\t0\t80\t0\t0\t0\t0\t0;")
            .replace("\t2\t3\t0\t0.1\t0\t100\t0\t0\t0\t0\t1;", "\t2\t3\t0\t0.1\t0\t100\t0\t0\t0\t0\t0;");
        assert!(matches!(parse_matpower_case(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_reference_uses_largest_capacity() {
        let text = TRIANGLE
            .replace("\t1\t3\t0\t0", "\t1\t2\t0\t0")
            .replace("\t2\t0\t0\t0\t0\t1\t100\t1\t200\t0;", "\t2\t0\t0\t0\t0\t1\t100\t1\t300\t0;");
        assert_eq!(parse_matpower_case(&text).unwrap().slack(), 1);
    }

    #[test]
    fn inline_rows_and_unlimited_rate() {
        let text = "mpc.baseMVA = 100;\n\
            mpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1 1; 2 1 40 0 0 0 1 1 0 1 1 1 1];\n\
            mpc.gen = [1, 0, 0, 0, 0, 1, 100, 1, 100, 0];\n\
            mpc.branch = [1 2 0 0.5 0 0 0 0 0.5 0 1];\n\
            mpc.gencost = [2 0 0 2 7 0];\n";
        let net = parse_matpower_case(text).unwrap();
        let br = &net.branches()[0];
        assert_eq!(br.fmax, 200.0);
        assert!((br.susceptance - 4.0).abs() < 1e-12);
    }
}
