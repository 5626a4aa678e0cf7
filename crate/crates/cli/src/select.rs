use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde::Serialize;

use crate::fit::read_fit;
use crate::manifest::OutputDir;

#[derive(Debug, Clone, Serialize)]
pub struct SelectRow {
    pub model: String,
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
    pub manifest: String,
}

#[derive(Debug, Serialize)]
struct SelectBody {
    data_hash: String,
    models: Vec<SelectRow>,
}

/// DIC table over fits of the same data, smallest first; ties keep name
/// order.
pub fn compare(manifests: &[PathBuf]) -> Result<(String, Vec<SelectRow>)> {
    if manifests.len() < 2 {
        bail!("need >= 2 fit manifests to compare, got {}", manifests.len());
    }
    let mut rows = Vec::new();
    let mut hash: Option<(String, &Path)> = None;
    for path in manifests {
        let fit = read_fit(path)?;
        let b = &fit.manifest.body;
        match &hash {
            None => hash = Some((b.data_hash.clone(), path)),
            Some((h, first)) if h != &b.data_hash => bail!(
                "{} and {} were fitted to different data sets",
                first.display(),
                path.display()
            ),
            Some(_) => {}
        }
        let dic = b
            .dic
            .ok_or_else(|| anyhow!("{} has no DIC (sampler `{}` keeps no draws)", path.display(), b.sampler))?;
        rows.push(SelectRow {
            model: b.name.clone(),
            dic: dic.dic,
            p_d: dic.p_d,
            mean_deviance: dic.mean_deviance,
            deviance_at_mean: dic.deviance_at_mean,
            manifest: path.to_string_lossy().into_owned(),
        });
    }
    rows.sort_by(|a, b| a.dic.total_cmp(&b.dic).then_with(|| a.model.cmp(&b.model)));
    Ok((hash.expect("non-empty").0, rows))
}

fn table(rows: &[SelectRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

/// Prints the table; with `out`, also writes `dic.csv` and a manifest there.
pub fn run(manifests: &[PathBuf], out: Option<&Path>) -> Result<String> {
    let (data_hash, rows) = compare(manifests)?;
    let text = table(&rows)?;
    if let Some(dir) = out {
        let mut o = OutputDir::create(dir)?;
        o.write("dic.csv", |buf| {
            buf.extend_from_slice(&text);
            Ok(())
        })?;
        let config = serde_json::json!({ "manifests": manifests });
        o.finish("select", 0, config, SelectBody { data_hash, models: rows })?;
    }
    Ok(String::from_utf8(text)?)
}
