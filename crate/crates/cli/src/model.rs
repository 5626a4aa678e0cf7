use anyhow::{anyhow, bail, Context, Result};
use hrem::event_data::{CovariateSet, EventHistory, RiskSet};
use hrem::presets;
use hrem::statistics::{BoundSpec, StatisticSpec, UniqueStatTable};

/// The statistic spec named by `preset` or given inline.
pub fn resolve_spec(preset: Option<&str>, spec: Option<&StatisticSpec>) -> Result<StatisticSpec> {
    match (preset, spec) {
        (Some(name), None) => presets::preset(name).ok_or_else(|| {
            anyhow!(
                "unknown preset `{name}` (known: {})",
                presets::preset_names().join(", ")
            )
        }),
        (None, Some(s)) => {
            s.check().context("config error at /spec")?;
            Ok(s.clone())
        }
        (Some(_), Some(_)) => bail!("config error at /preset: give either `preset` or `spec`, not both"),
        (None, None) => bail!("config error at /: a `preset` or `spec` is required"),
    }
}

pub fn bind(spec: &StatisticSpec, cov: &CovariateSet, risk: &RiskSet, sequence: &str) -> Result<BoundSpec> {
    spec.bind(cov, risk)
        .with_context(|| format!("binding the model to sequence `{sequence}`"))
}

/// Binds and tabulates every sequence; all must resolve to the same columns.
pub fn build_tables<'a, I>(spec: &StatisticSpec, seqs: I) -> Result<(Vec<String>, Vec<UniqueStatTable>)>
where
    I: IntoIterator<Item = (&'a EventHistory, &'a CovariateSet, &'a RiskSet)>,
{
    let mut names: Option<Vec<String>> = None;
    let mut tables = Vec::new();
    for (history, cov, risk) in seqs {
        let id = history.sequence_id();
        let bound = bind(spec, cov, risk, id)?;
        match &names {
            None => names = Some(bound.names().to_vec()),
            Some(n) if n != bound.names() => bail!(
                "sequence `{id}` resolves to columns [{}] but earlier sequences to [{}]",
                bound.names().join(", "),
                n.join(", ")
            ),
            Some(_) => {}
        }
        tables.push(
            UniqueStatTable::build(&bound, history, risk, cov)
                .with_context(|| format!("tabulating sequence `{id}`"))?,
        );
    }
    Ok((names.unwrap_or_default(), tables))
}
