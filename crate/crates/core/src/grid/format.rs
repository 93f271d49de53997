use std::path::Path;

use super::model::{Branch, Bus, BusKind, Generator, Load, Network};
use super::GridError;
use crate::sectioned::{self, Record, Section, SyntaxError, Writer};

pub const FORMAT_VERSION: u32 = 1;

pub fn parse_network(path: impl AsRef<Path>) -> Result<Network, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network_str(&text)
}

struct Columns<'a> {
    section: &'a Section,
}

impl<'a> Columns<'a> {
    fn index(&self, name: &'static str) -> Result<usize, GridError> {
        self.section.column(name).ok_or_else(|| GridError::Field {
            line: self.section.line,
            message: format!("[{}] is missing column {name:?}", self.section.name),
        })
    }

    fn text<'r>(&self, rec: &'r Record, name: &'static str) -> Result<&'r str, GridError> {
        Ok(rec.fields[self.index(name)?].as_str())
    }

    fn number(&self, rec: &Record, name: &'static str) -> Result<f64, GridError> {
        let i = self.index(name)?;
        parse_f64(rec, i, name)
    }

    fn opt_number(&self, rec: &Record, name: &'static str) -> Result<Option<f64>, GridError> {
        match self.section.column(name) {
            Some(i) if !rec.fields[i].is_empty() => parse_f64(rec, i, name).map(Some),
            _ => Ok(None),
        }
    }

    fn flag(&self, rec: &Record, name: &'static str) -> Result<bool, GridError> {
        let Some(i) = self.section.column(name) else {
            return Ok(false);
        };
        match rec.fields[i].to_ascii_lowercase().as_str() {
            "" | "0" | "false" | "no" => Ok(false),
            "1" | "true" | "yes" => Ok(true),
            other => Err(syntax(rec, i, format!("{name}: expected a boolean, got {other:?}"))),
        }
    }
}

fn syntax(rec: &Record, field: usize, message: String) -> GridError {
    GridError::Syntax(SyntaxError {
        line: rec.line,
        column: rec.columns[field],
        message,
    })
}

fn parse_f64(rec: &Record, i: usize, name: &str) -> Result<f64, GridError> {
    let raw = &rec.fields[i];
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(rec, i, format!("{name}: expected a finite number, got {raw:?}"))),
    }
}

fn required<'a>(doc: &'a sectioned::Document, name: &'static str) -> Result<&'a Section, GridError> {
    doc.section(name).ok_or(GridError::MissingSection(name))
}

pub fn parse_network_str(text: &str) -> Result<Network, GridError> {
    let doc = sectioned::parse(text)?;

    let meta = required(&doc, "meta")?;
    let meta_value = |key: &str| meta.value_of(key).and_then(|r| r.fields.get(1)).map(String::as_str);
    if meta_value("format") != Some("1") {
        return Err(GridError::FormatVersion);
    }
    let meta_number = |key: &'static str, default: f64| -> Result<f64, GridError> {
        match meta.value_of(key) {
            None => Ok(default),
            Some(rec) => parse_f64(rec, 1, key),
        }
    };
    let name = meta_value("name").unwrap_or("network").to_string();
    let base_mva = meta_number("base_mva", 100.0)?;
    let base_frequency_hz = meta_number("base_frequency", 50.0)?;

    let section = required(&doc, "buses")?;
    let cols = Columns { section };
    let mut buses = Vec::with_capacity(section.records.len());
    for rec in &section.records {
        let kind_col = cols.index("kind")?;
        let kind: BusKind = rec.fields[kind_col]
            .parse()
            .map_err(|e: String| syntax(rec, kind_col, e))?;
        buses.push(Bus {
            id: cols.text(rec, "id")?.to_string(),
            kind,
            nominal_kv: cols.number(rec, "nominal_kv")?,
            v_set: cols.opt_number(rec, "v_set")?,
        });
    }

    let section = required(&doc, "branches")?;
    let cols = Columns { section };
    let mut branches = Vec::with_capacity(section.records.len());
    for rec in &section.records {
        branches.push(Branch {
            id: cols.text(rec, "id")?.to_string(),
            from_bus: cols.text(rec, "from")?.to_string(),
            to_bus: cols.text(rec, "to")?.to_string(),
            r_per_km: cols.number(rec, "r_ohm_per_km")?,
            x_per_km: cols.number(rec, "x_ohm_per_km")?,
            b_per_km: cols.opt_number(rec, "b_s_per_km")?.unwrap_or(0.0),
            length_km: cols.number(rec, "length_km")?,
            tap_ratio: cols.opt_number(rec, "tap_ratio")?.unwrap_or(1.0),
        });
    }

    let mut loads = Vec::new();
    if let Some(section) = doc.section("loads") {
        let cols = Columns { section };
        for rec in &section.records {
            loads.push(Load {
                id: cols.text(rec, "id")?.to_string(),
                bus: cols.text(rec, "bus")?.to_string(),
                p_mw: cols.number(rec, "p_mw")?,
                q_mvar: cols.number(rec, "q_mvar")?,
            });
        }
    }

    let mut generators = Vec::new();
    if let Some(section) = doc.section("generators") {
        let cols = Columns { section };
        for rec in &section.records {
            let q_set = cols.opt_number(rec, "q_mvar")?.unwrap_or(0.0);
            generators.push(Generator {
                id: cols.text(rec, "id")?.to_string(),
                bus: cols.text(rec, "bus")?.to_string(),
                p_set_mw: cols.number(rec, "p_mw")?,
                q_set_mvar: q_set,
                q_min_mvar: cols.opt_number(rec, "q_min_mvar")?.unwrap_or(q_set),
                q_max_mvar: cols.opt_number(rec, "q_max_mvar")?.unwrap_or(q_set),
                controllable: cols.flag(rec, "controllable")?,
                external: cols.flag(rec, "external")?,
            });
        }
    }

    Network::new(name, base_mva, base_frequency_hz, buses, branches, loads, generators)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Canonical text form: records sorted by id, numbers in shortest
/// round-trip notation.
pub fn serialize_network(net: &Network) -> String {
    let net = net.canonical();
    let mut w = Writer::new();
    w.section(
        "meta",
        &["key", "value"],
        vec![
            vec!["format".to_string(), FORMAT_VERSION.to_string()],
            vec!["name".to_string(), net.name.clone()],
            vec!["base_mva".to_string(), net.base_mva.to_string()],
            vec!["base_frequency".to_string(), net.base_frequency_hz.to_string()],
        ],
    );
    w.section(
        "buses",
        &["id", "kind", "nominal_kv", "v_set"],
        net.buses
            .iter()
            .map(|b| vec![b.id.clone(), b.kind.to_string(), b.nominal_kv.to_string(), opt(b.v_set)]),
    );
    w.section(
        "branches",
        &["id", "from", "to", "r_ohm_per_km", "x_ohm_per_km", "b_s_per_km", "length_km", "tap_ratio"],
        net.branches.iter().map(|b| {
            vec![
                b.id.clone(),
                b.from_bus.clone(),
                b.to_bus.clone(),
                b.r_per_km.to_string(),
                b.x_per_km.to_string(),
                b.b_per_km.to_string(),
                b.length_km.to_string(),
                b.tap_ratio.to_string(),
            ]
        }),
    );
    w.section(
        "loads",
        &["id", "bus", "p_mw", "q_mvar"],
        net.loads
            .iter()
            .map(|l| vec![l.id.clone(), l.bus.clone(), l.p_mw.to_string(), l.q_mvar.to_string()]),
    );
    w.section(
        "generators",
        &["id", "bus", "p_mw", "q_mvar", "q_min_mvar", "q_max_mvar", "controllable", "external"],
        net.generators.iter().map(|g| {
            vec![
                g.id.clone(),
                g.bus.clone(),
                g.p_set_mw.to_string(),
                g.q_set_mvar.to_string(),
                g.q_min_mvar.to_string(),
                g.q_max_mvar.to_string(),
                g.controllable.to_string(),
                g.external.to_string(),
            ]
        }),
    );
    w.finish()
}
