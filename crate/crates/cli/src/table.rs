use hsdetect::metrics::EvalSummary;
use hsdetect::Method;

const METHOD_ORDER: [Method; 5] = [Method::Sam, Method::Mf, Method::Ace, Method::Cem, Method::Nn];

/// AP and AUC per (method, region). Rows follow a fixed method order and
/// regions keep the order they were first seen in.
#[derive(Debug, Default)]
pub struct SummaryTable {
    regions: Vec<String>,
    entries: Vec<EvalSummary>,
}

impl SummaryTable {
    /// Add a summary; a repeated (method, region) pair replaces the earlier
    /// entry, which is returned.
    pub fn insert(&mut self, s: EvalSummary) -> Option<EvalSummary> {
        if !self.regions.contains(&s.region) {
            self.regions.push(s.region.clone());
        }
        match self
            .entries
            .iter_mut()
            .find(|e| e.method == s.method && e.region == s.region)
        {
            Some(e) => Some(std::mem::replace(e, s)),
            None => {
                self.entries.push(s);
                None
            }
        }
    }

    fn methods(&self) -> Vec<Method> {
        METHOD_ORDER
            .into_iter()
            .filter(|m| self.entries.iter().any(|e| e.method == *m))
            .collect()
    }

    fn cells(&self, method: Method) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.regions {
            match self.entries.iter().find(|e| e.method == method && &e.region == r) {
                Some(e) => {
                    out.push(format!("{:.3}", e.ap));
                    out.push(format!("{:.3}", e.auc));
                }
                None => {
                    out.push("--".into());
                    out.push("--".into());
                }
            }
        }
        out
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["method".to_string()];
        for r in &self.regions {
            h.push(format!("{r} AP"));
            h.push(format!("{r} AUC"));
        }
        h
    }

    #[cfg(test)]
    fn rows(&self) -> usize {
        self.methods().len()
    }

    pub fn to_text(&self) -> String {
        let mut rows = vec![self.header()];
        for m in self.methods() {
            let mut row = vec![m.as_str().to_uppercase()];
            row.extend(self.cells(m));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            s.push_str(cells.join(" | ").trim_end());
            s.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                s.push_str(&rule.join("-|-"));
                s.push('\n');
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for r in &self.regions {
            s.push_str(&format!(",{r}_ap,{r}_auc"));
        }
        s.push('\n');
        for m in self.methods() {
            s.push_str(m.as_str());
            for c in self.cells(m) {
                s.push(',');
                s.push_str(&c);
            }
            s.push('\n');
        }
        s
    }
}
