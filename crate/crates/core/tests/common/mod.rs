#![allow(dead_code)]

use std::path::PathBuf;

use npgc::numkernels::Rng;
use npgc::{Column, ColumnSchema, CsvOptions, Table};

pub fn adult_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/adult.csv")
}

pub fn adult() -> Table {
    npgc::read_csv(adult_path(), None, &CsvOptions::default()).expect("adult fixture")
}

/// Mixed-type table with correlated columns and some missing cells.
pub fn mixed_table(n: usize, seed: u64) -> Table {
    let mut rng = Rng::new(seed);
    let schema = vec![
        ColumnSchema::continuous("x"),
        ColumnSchema::integer("k"),
        ColumnSchema::categorical("c", ["a", "b", "c"]),
        ColumnSchema::continuous("y"),
    ];
    let (mut x, mut k, mut c, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let g = rng.standard_normal();
        let h = rng.standard_normal();
        x.push(if i % 13 == 0 { None } else { Some(g * 2.0 + 5.0) });
        k.push(Some((g * 3.0).round() as i64 + rng.below(3) as i64));
        c.push(Some(if g > 0.5 {
            0
        } else if g > -0.5 {
            1
        } else {
            2
        }));
        y.push(Some((0.6 * g + 0.8 * h).exp()));
    }
    Table::new(schema, vec![Column::Continuous(x), Column::Integer(k), Column::Categorical(c), Column::Continuous(y)])
        .unwrap()
}

pub fn reversed(t: &Table) -> Table {
    let rows: Vec<usize> = (0..t.n_rows()).rev().collect();
    t.take_rows(&rows).unwrap()
}
