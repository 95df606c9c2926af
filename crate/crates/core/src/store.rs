//! Table files: `ct.csv`, `pt.csv`, `profit_l{j}.csv` and a `tables.json`
//! sidecar. Floats are written with the shortest round-tripping decimal form
//! so a reload reproduces every value bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::synthesis::DisturbancePattern;
use crate::tables::{
    build_profit_tables, totals_over_window, CostTable, LevelSpec, PowerTable, ProfitRow,
    ProfitTables,
};

pub const COST_FILE: &str = "ct.csv";
pub const POWER_FILE: &str = "pt.csv";
pub const META_FILE: &str = "tables.json";

pub fn profit_file(level: usize) -> String {
    format!("profit_l{}.csv", level + 1)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub created_utc: String,
    pub plant_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

impl Provenance {
    pub fn now(plant_bytes: &[u8], config_bytes: Option<&[u8]>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            plant_sha256: sha256_hex(plant_bytes),
            config_sha256: config_bytes.map(sha256_hex),
        }
    }
}

/// Pattern and window the stored profit tables were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitContext {
    pub pattern: DisturbancePattern,
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub provenance: Provenance,
    pub levels: LevelSpec,
    pub peak_power_mw: f64,
    pub phi_mj: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profit: Option<ProfitContext>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableBundle {
    pub meta: TableMeta,
    pub cost_table: CostTable,
    pub power_table: PowerTable,
    pub profit_tables: Option<ProfitTables>,
}

impl TableBundle {
    pub fn new(
        cost_table: CostTable,
        power_table: PowerTable,
        levels: LevelSpec,
        provenance: Provenance,
        profit: Option<ProfitContext>,
    ) -> Result<Self> {
        let profit_tables = match &profit {
            Some(ctx) => Some(build_profit_tables(&totals_over_window(
                &cost_table,
                &power_table,
                &ctx.pattern,
                ctx.window_s,
            )?)?),
            None => None,
        };
        let meta = TableMeta {
            provenance,
            levels,
            peak_power_mw: power_table.power_mw[0],
            phi_mj: power_table.phi_mj,
            profit,
        };
        Ok(Self {
            meta,
            cost_table,
            power_table,
            profit_tables,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let k = self.cost_table.levels();

        let mut w = writer(&dir.join(COST_FILE))?;
        let mut header = vec!["h_ms".to_string()];
        header.extend((1..=k).map(|j| format!("l{j}")));
        w.write_record(&header)?;
        for (ms, row) in self.cost_table.periods_ms.iter().zip(&self.cost_table.entries) {
            let mut rec = vec![ms.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(dir.join(COST_FILE), e))?;

        let mut w = writer(&dir.join(POWER_FILE))?;
        w.write_record(["h_ms", "power_mw"])?;
        for (ms, p) in self.power_table.periods_ms.iter().zip(&self.power_table.power_mw) {
            w.write_record([ms.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(dir.join(POWER_FILE), e))?;

        if let Some(pt) = &self.profit_tables {
            for (j, rows) in pt.levels.iter().enumerate() {
                let path = dir.join(profit_file(j));
                let mut w = writer(&path)?;
                w.write_record(["rank", "h_ms", "period_index", "cc_total", "ec_total", "profit"])?;
                for (rank, row) in rows.iter().enumerate() {
                    w.write_record([
                        (rank + 1).to_string(),
                        self.cost_table.periods_ms[row.period_index].to_string(),
                        (row.period_index + 1).to_string(),
                        row.cc_total.to_string(),
                        row.ec_total.to_string(),
                        row.profit.to_string(),
                    ])?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }

        let meta_path = dir.join(META_FILE);
        let text = serde_json::to_string_pretty(&self.meta).map_err(|source| Error::Json {
            path: meta_path.clone(),
            source,
        })?;
        fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: TableMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: meta_path.clone(),
            source,
        })?;
        meta.levels.validate()?;

        let ct_path = dir.join(COST_FILE);
        let rows = read_rows(&ct_path)?;
        let k = meta.levels.count();
        let mut periods = Vec::with_capacity(rows.len());
        let mut entries = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != k + 1 {
                return Err(format_error(&ct_path, format!("expected {} columns", k + 1)));
            }
            periods.push(row[0]);
            entries.push(row[1..].to_vec());
        }
        let cost_table = CostTable::from_entries(periods, entries)?;

        let pt_path = dir.join(POWER_FILE);
        let rows = read_rows(&pt_path)?;
        if rows.iter().any(|r| r.len() != 2) {
            return Err(format_error(&pt_path, "expected 2 columns"));
        }
        let power_table = PowerTable {
            periods_ms: rows.iter().map(|r| r[0]).collect(),
            power_mw: rows.iter().map(|r| r[1]).collect(),
            phi_mj: meta.phi_mj,
        };
        if power_table.periods_ms != cost_table.periods_ms {
            return Err(format_error(&pt_path, "periods differ from ct.csv"));
        }

        let profit_tables = if meta.profit.is_some() {
            let mut levels = Vec::with_capacity(k);
            for j in 0..k {
                let path = dir.join(profit_file(j));
                let rows = read_rows(&path)?;
                let mut out = Vec::with_capacity(rows.len());
                for r in rows {
                    if r.len() != 6 || r[2] < 1.0 {
                        return Err(format_error(&path, "malformed profit row"));
                    }
                    out.push(ProfitRow {
                        period_index: r[2] as usize - 1,
                        cc_total: r[3],
                        ec_total: r[4],
                        profit: r[5],
                    });
                }
                levels.push(out);
            }
            Some(ProfitTables { levels })
        } else {
            None
        };

        Ok(Self {
            meta,
            cost_table,
            power_table,
            profit_tables,
        })
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::TableFormat {
        path: PathBuf::from(path),
        message: message.into(),
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    format_error(path, format!("row {}: `{field}` is not a number", line + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_error(path, "no data rows"));
    }
    Ok(rows)
}
