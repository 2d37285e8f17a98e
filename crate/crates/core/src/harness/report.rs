use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Metric, Metrics, Setting, System};
use crate::error::{LscError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Label used in the domain column of average rows.
const AVERAGE: &str = "(average)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub system: System,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub domain: String,
    pub results: Vec<SystemResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub past_domains: usize,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub setting: Setting,
    pub systems: Vec<System>,
    pub per_domain: Vec<DomainResult>,
    pub averages: Vec<SystemResult>,
    pub ablation_curve: Vec<AblationPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// One `domain system metric value` row per entry.
    Tsv,
    Json,
    /// Domains by systems for the setting's headline metric, in percent.
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = LscError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            _ => Err(LscError::Parse(format!("unknown report format {s:?}"))),
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn round_metrics(m: &Metrics) -> Metrics {
    Metrics {
        f1_negative: round6(m.f1_negative),
        f1_positive: round6(m.f1_positive),
        accuracy: round6(m.accuracy),
    }
}

impl EvalReport {
    /// Builds a report; averages are the per-system means over domains.
    pub fn new(
        setting: Setting,
        systems: &[System],
        per_domain: Vec<DomainResult>,
        ablation_curve: Vec<AblationPoint>,
    ) -> Self {
        let averages = systems
            .iter()
            .filter_map(|&s| {
                let vals = per_domain
                    .iter()
                    .filter_map(|d| d.results.iter().find(|r| r.system == s).map(|r| &r.metrics));
                Metrics::mean(vals).map(|metrics| SystemResult { system: s, metrics })
            })
            .collect();
        EvalReport {
            schema_version: SCHEMA_VERSION,
            setting,
            systems: systems.to_vec(),
            per_domain,
            averages,
            ablation_curve,
        }
    }

    pub fn average(&self, system: System) -> Option<&Metrics> {
        self.averages.iter().find(|r| r.system == system).map(|r| &r.metrics)
    }

    /// Copy with every value rounded to 6 decimals, as written to disk.
    pub fn rounded(&self) -> EvalReport {
        let sys = |r: &SystemResult| SystemResult {
            system: r.system,
            metrics: round_metrics(&r.metrics),
        };
        EvalReport {
            schema_version: self.schema_version,
            setting: self.setting,
            systems: self.systems.clone(),
            per_domain: self
                .per_domain
                .iter()
                .map(|d| DomainResult {
                    domain: d.domain.clone(),
                    results: d.results.iter().map(sys).collect(),
                })
                .collect(),
            averages: self.averages.iter().map(sys).collect(),
            ablation_curve: self
                .ablation_curve
                .iter()
                .map(|p| AblationPoint {
                    value: round6(p.value),
                    ..*p
                })
                .collect(),
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Tsv => self.to_tsv(),
            ReportFormat::Json => self.to_json(),
            ReportFormat::Table => self.to_table(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let r = self.rounded();
        let mut out = String::new();
        writeln!(out, "# schema_version\t{}", r.schema_version).unwrap();
        writeln!(out, "# setting\t{}", r.setting.as_str()).unwrap();
        out.push_str("domain\tsystem\tmetric\tvalue\n");
        let rows = r
            .per_domain
            .iter()
            .flat_map(|d| d.results.iter().map(move |x| (d.domain.as_str(), x)))
            .chain(r.averages.iter().map(|x| (AVERAGE, x)));
        for (domain, x) in rows {
            for m in Metric::ALL {
                writeln!(
                    out,
                    "{domain}\t{}\t{}\t{:.6}",
                    x.system.as_str(),
                    m.as_str(),
                    x.metrics.get(m)
                )
                .unwrap();
            }
        }
        for p in &r.ablation_curve {
            writeln!(
                out,
                "(past={})\tLSC\t{}\t{:.6}",
                p.past_domains,
                p.metric.as_str(),
                p.value
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.rounded()).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let metric = self.setting.headline();
        let width = self
            .per_domain
            .iter()
            .map(|d| d.domain.len())
            .max()
            .unwrap_or(0)
            .max(AVERAGE.len());
        let mut out = String::new();
        if !self.per_domain.is_empty() {
            self.domain_table(&mut out, metric, width);
        }
        if !self.ablation_curve.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("past_domains  value\n");
            for p in &self.ablation_curve {
                writeln!(out, "{:>12}  {:.2}", p.past_domains, 100.0 * p.value).unwrap();
            }
        }
        out
    }

    fn domain_table(&self, out: &mut String, metric: Metric, width: usize) {
        write!(out, "{:width$}", "domain").unwrap();
        for s in &self.systems {
            write!(out, "  {:>7}", s.as_str()).unwrap();
        }
        out.push('\n');
        let rows = self
            .per_domain
            .iter()
            .map(|d| (d.domain.as_str(), &d.results))
            .chain(std::iter::once((AVERAGE, &self.averages)));
        for (name, results) in rows {
            write!(out, "{name:width$}").unwrap();
            for s in &self.systems {
                match results.iter().find(|r| r.system == *s) {
                    Some(r) => write!(out, "  {:>7.2}", 100.0 * r.metrics.get(metric)).unwrap(),
                    None => write!(out, "  {:>7}", "-").unwrap(),
                }
            }
            out.push('\n');
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(s).map_err(|e| LscError::Parse(e.to_string()))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(LscError::Parse(format!(
                "unsupported report schema {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn report() -> EvalReport {
        let m = |a: f64, b: f64, c: f64| Metrics {
            f1_negative: a,
            f1_positive: b,
            accuracy: c,
        };
        let per_domain = vec![
            DomainResult {
                domain: "books".into(),
                results: vec![
                    SystemResult {
                        system: System::NbT,
                        metrics: m(2.0 / 3.0, 0.9, 0.85),
                    },
                    SystemResult {
                        system: System::Lsc,
                        metrics: m(0.7, 0.91, 1.0 / 3.0),
                    },
                ],
            },
            DomainResult {
                domain: "cars".into(),
                results: vec![
                    SystemResult {
                        system: System::NbT,
                        metrics: m(0.5, 0.8, 0.7),
                    },
                    SystemResult {
                        system: System::Lsc,
                        metrics: m(0.1234565, 0.0, 1.0),
                    },
                ],
            },
        ];
        let curve = vec![AblationPoint {
            past_domains: 1,
            metric: Metric::F1Negative,
            value: 0.55555555,
        }];
        EvalReport::new(Setting::Natural, &[System::NbT, System::Lsc], per_domain, curve)
    }

    #[test]
    fn averages_are_domain_means() {
        let r = report();
        let lsc = r.average(System::Lsc).unwrap();
        assert!((lsc.f1_negative - (0.7 + 0.1234565) / 2.0).abs() < 1e-12);
        assert!((r.average(System::NbT).unwrap().accuracy - 0.775).abs() < 1e-12);
    }

    #[test]
    fn tsv_and_json_carry_the_same_numbers() {
        let r = report();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let mut from_json = BTreeMap::new();
        let mut add = |domain: &str, results: &serde_json::Value| {
            for x in results.as_array().unwrap() {
                for m in Metric::ALL {
                    let v = x["metrics"][m.as_str()].as_f64().unwrap();
                    from_json.insert(
                        (
                            domain.to_string(),
                            x["system"].as_str().unwrap().to_string(),
                            m.as_str(),
                        ),
                        v,
                    );
                }
            }
        };
        for d in json["per_domain"].as_array().unwrap() {
            add(d["domain"].as_str().unwrap(), &d["results"]);
        }
        add(AVERAGE, &json["averages"]);

        let tsv = r.to_tsv();
        let mut rows = 0;
        for line in tsv.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            assert_eq!(f.len(), 4);
            if f[0].starts_with("(past=") {
                assert_eq!(
                    f[3].parse::<f64>().unwrap(),
                    json["ablation_curve"][0]["value"].as_f64().unwrap()
                );
                continue;
            }
            let key = (
                f[0].to_string(),
                f[1].to_string(),
                Metric::ALL.iter().find(|m| m.as_str() == f[2]).unwrap().as_str(),
            );
            assert_eq!(f[3].parse::<f64>().unwrap(), from_json[&key], "{line}");
            rows += 1;
        }
        assert_eq!(rows, from_json.len());
        assert_eq!(rows, (2 + 1) * 2 * 3);
    }

    #[test]
    fn json_round_trip() {
        let r = report().rounded();
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        assert!(EvalReport::from_json("{}").is_err());
    }

    #[test]
    fn rendering_is_stable() {
        let r = report();
        assert_eq!(r.to_tsv(), r.clone().to_tsv());
        let table = r.to_table();
        assert!(table.lines().next().unwrap().contains("NB-T"));
        assert!(table.contains("66.67"));
        assert!(table.contains(AVERAGE));
    }
}
