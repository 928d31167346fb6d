//! CSV rendering of a trace. Floats use Rust's shortest round-trip
//! formatting, which is locale independent; rows end in `\n`.

use std::fmt::Write;

use buying_rights::Trace;

use crate::error::{CliError, Result};

pub const ROUND_COLUMNS: [&str; 8] = [
    "tau",
    "price_good",
    "price_right",
    "expected_frustration",
    "useful_money",
    "useless_money",
    "volume_offered",
    "volume_sold",
];

const BUYER_FIELDS: [&str; 4] = ["money", "good", "right", "frustration"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Round(usize),
    Buyer { buyer: usize, field: usize },
}

impl Column {
    pub fn parse(name: &str, num_buyers: usize) -> Result<Column> {
        if let Some(i) = ROUND_COLUMNS.iter().position(|c| *c == name) {
            return Ok(Column::Round(i));
        }
        let unknown = || CliError::Parse(format!("unknown column `{name}`"));
        let (buyer, field) = name
            .strip_prefix('b')
            .and_then(|rest| rest.split_once('_'))
            .ok_or_else(unknown)?;
        let buyer: usize = buyer.parse().map_err(|_| unknown())?;
        let field = BUYER_FIELDS
            .iter()
            .position(|f| *f == field)
            .ok_or_else(unknown)?;
        if buyer >= num_buyers {
            return Err(CliError::Parse(format!(
                "column `{name}` refers to buyer {buyer}, but there are {num_buyers} buyers"
            )));
        }
        Ok(Column::Buyer { buyer, field })
    }

    pub fn name(self) -> String {
        match self {
            Column::Round(i) => ROUND_COLUMNS[i].to_string(),
            Column::Buyer { buyer, field } => format!("b{buyer}_{}", BUYER_FIELDS[field]),
        }
    }
}

/// Round columns followed by one group per buyer.
pub fn all_columns(num_buyers: usize) -> Vec<Column> {
    let mut cols: Vec<Column> = (0..ROUND_COLUMNS.len()).map(Column::Round).collect();
    for buyer in 0..num_buyers {
        cols.extend((0..BUYER_FIELDS.len()).map(|field| Column::Buyer { buyer, field }));
    }
    cols
}

pub fn select_columns(names: Option<&[String]>, num_buyers: usize) -> Result<Vec<Column>> {
    match names {
        None => Ok(all_columns(num_buyers)),
        Some(names) => names.iter().map(|n| Column::parse(n, num_buyers)).collect(),
    }
}

pub fn trace_csv(trace: &Trace, columns: &[Column]) -> String {
    let mut out = String::new();
    let header: Vec<String> = columns.iter().map(|c| c.name()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, r) in trace.records.iter().enumerate() {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = match *col {
                Column::Round(0) => write!(out, "{}", r.round),
                Column::Round(j) => {
                    let v = match j {
                        1 => r.price_good,
                        2 => r.price_right,
                        3 => trace.expected_frustration_path[i],
                        4 => r.useful_money,
                        5 => r.useless_money,
                        6 => r.volume_offered,
                        _ => r.volume_sold,
                    };
                    write!(out, "{v}")
                }
                Column::Buyer { buyer, field } => {
                    let v = match field {
                        0 => r.money_start[buyer],
                        1 => r.good_end[buyer],
                        2 => r.right_assigned[buyer],
                        _ => r.frustration[buyer],
                    };
                    write!(out, "{v}")
                }
            };
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use buying_rights::scenarios::scenario_a;
    use buying_rights::{run, DistributionMechanism, Variant};

    #[test]
    fn header_matches_layout() {
        let names: Vec<String> = all_columns(2).iter().map(|c| c.name()).collect();
        assert_eq!(
            names.join(","),
            "tau,price_good,price_right,expected_frustration,useful_money,useless_money,\
             volume_offered,volume_sold,b0_money,b0_good,b0_right,b0_frustration,\
             b1_money,b1_good,b1_right,b1_frustration"
        );
    }

    #[test]
    fn column_names_round_trip() {
        for col in all_columns(12) {
            assert_eq!(Column::parse(&col.name(), 12).unwrap(), col);
        }
        for bad in ["", "price", "b_money", "bx_money", "b0_cash", "b12_money"] {
            assert!(Column::parse(bad, 12).is_err(), "{bad}");
        }
    }

    #[test]
    fn rows_have_one_field_per_column() {
        let cfg = scenario_a(DistributionMechanism::Proportional, Variant::Rights);
        let trace = run(&cfg, 5).unwrap();
        let cols = all_columns(3);
        let csv = trace_csv(&trace, &cols);
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        for line in &lines {
            assert_eq!(line.split(',').count(), cols.len());
            assert!(!line.ends_with(','));
        }
        let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[0], 1.0);
        assert_eq!(first[1], trace.records[0].price_good);
    }

    #[test]
    fn selected_columns_keep_requested_order() {
        let cfg = scenario_a(DistributionMechanism::Proportional, Variant::Rights);
        let trace = run(&cfg, 2).unwrap();
        let names = vec!["b2_good".to_string(), "tau".to_string()];
        let cols = select_columns(Some(&names), 3).unwrap();
        let csv = trace_csv(&trace, &cols);
        assert!(csv.starts_with("b2_good,tau\n"));
        assert!(csv.lines().nth(2).unwrap().ends_with(",2"));
    }
}
