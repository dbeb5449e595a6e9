//! Plain CSV output with 17 significant digits.

/// Format a float with 17 significant digits (round-trip exact).
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{:.16e}", x)
    }
}

/// Comma-separated table with a header row.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    out: String,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let cols: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
        let mut out = cols.join(",");
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| fmt17(*v)).collect();
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}
