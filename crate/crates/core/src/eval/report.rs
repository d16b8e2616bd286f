use std::fmt::Write as _;

/// One configuration's metrics at one cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub n: usize,
    pub precision: f64,
    pub recall: f64,
    pub diversity: usize,
    pub personalization: f64,
    pub users: usize,
}

/// A titled table of metric rows with the producing configuration echoed
/// as `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub config: Vec<(String, String)>,
    pub rows: Vec<MetricRow>,
}

const HEADER: [&str; 7] = ["name", "N", "P@N", "R@N", "D@N", "H@N", "users"];

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn with_config(mut self, config: &[(String, String)]) -> Self {
        self.config.extend_from_slice(config);
        self
    }

    pub fn row(&self, name: &str, n: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name && r.n == n)
    }

    fn cells(r: &MetricRow) -> [String; 7] {
        [
            r.name.clone(),
            r.n.to_string(),
            format!("{:.4}", r.precision),
            format!("{:.4}", r.recall),
            r.diversity.to_string(),
            format!("{:.4}", r.personalization),
            r.users.to_string(),
        ]
    }

    fn config_lines(&self, out: &mut String) {
        for (k, v) in &self.config {
            let _ = writeln!(out, "# config {k} = {v}");
        }
    }

    /// Column-aligned table for reading.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        self.config_lines(&mut out);
        let body: Vec<[String; 7]> = self.rows.iter().map(Self::cells).collect();
        let mut width = HEADER.map(str::len);
        for r in &body {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        format!("{c:<w$}", w = width[k])
                    } else {
                        format!("{c:>w$}", w = width[k])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&HEADER.map(String::from)));
        for r in &body {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }

    /// Tab-separated, with the title and configuration as `#` comments.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.title);
        self.config_lines(&mut out);
        let _ = writeln!(out, "{}", HEADER.join("\t"));
        for r in &self.rows {
            let _ = writeln!(out, "{}", Self::cells(r).join("\t"));
        }
        out
    }
}
