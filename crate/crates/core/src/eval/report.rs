use super::{EvalReport, InVsOutReport, LabelPropCurve};

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Text(String),
    Num(Option<f64>),
}

/// A rectangular report rendered as aligned text or CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row: a leading label followed by numbers (`None` renders
    /// empty).
    pub fn push(&mut self, label: impl Into<String>, values: impl IntoIterator<Item = Option<f64>>) {
        let mut row = vec![Cell::Text(label.into())];
        row.extend(values.into_iter().map(Cell::Num));
        self.rows.push(row);
    }

    pub fn from_reports(reports: &[EvalReport]) -> Self {
        let domains: Vec<String> = reports
            .first()
            .map(|r| r.per_domain.iter().map(|d| d.domain.clone()).collect())
            .unwrap_or_default();
        let mut headers = vec!["config".to_string(), "acc".to_string(), "sigma_delta".to_string()];
        headers.extend(domains.iter().cloned());
        let mut t = Table::new(headers);
        for r in reports {
            let mut vals = vec![Some(r.accuracy), r.sigma_delta];
            vals.extend(domains.iter().map(|d| r.accuracy_on(d)));
            t.push(r.config.clone(), vals);
        }
        t
    }

    pub fn from_in_vs_out(report: &InVsOutReport) -> Self {
        let mut t = Table::new(["domain", "id", "ood", "drop"]);
        for r in &report.rows {
            t.push(r.domain.clone(), [Some(r.in_domain), Some(r.out_of_domain), Some(r.drop)]);
        }
        t.push(
            "mean",
            [
                Some(report.mean_in_domain),
                Some(report.mean_out_of_domain),
                Some(report.mean_in_domain - report.mean_out_of_domain),
            ],
        );
        t.push("sigma_delta", [None, None, Some(report.sigma_delta)]);
        t
    }

    pub fn from_curve(curve: &LabelPropCurve) -> Self {
        let mut t = Table::new(["size", "mean", "std"]);
        for p in &curve.points {
            t.push(p.size.to_string(), [Some(p.mean), Some(p.std)]);
        }
        t.push("oracle", [Some(curve.oracle_accuracy), None]);
        t
    }

    /// Space-aligned columns, numbers to 4 decimals.
    pub fn render_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Cell::Text(s) => s.clone(),
                        Cell::Num(Some(v)) => format!("{v:.4}"),
                        Cell::Num(None) => String::new(),
                    })
                    .collect()
            })
            .collect();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &cells {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |r: &[String]| {
            let parts: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        for r in &cells {
            out += &line(r);
        }
        out
    }

    /// RFC 4180 CSV with full-precision numbers.
    pub fn render_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            let rec: Vec<String> = r
                .iter()
                .map(|c| match c {
                    Cell::Text(s) => s.clone(),
                    Cell::Num(Some(v)) => v.to_string(),
                    Cell::Num(None) => String::new(),
                })
                .collect();
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
