use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{train, RunManifest, TrainConfig};
use crate::controllers::{encode_checkpoint, ControllerKind, ControllerSpec};
use crate::dataset::{build_dataset, load_demonstrations, Dataset, DatasetSpec, Demonstration, Variant};
use crate::error::{Error, Result};
use crate::numerics::RngState;
use crate::simulator::{generate_demonstrations, success_rate, ConditionProfile, DemoConfig, RolloutConfig};

/// CSV shape of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    /// Rows: test condition; columns: controller.
    Table2,
    /// Rows: controller × `p_t`; columns: dataset variant.
    Table3,
    /// Rows: controller × `p_t` × `s'`; columns: dataset variant.
    Table4,
    /// One row per cell, variant and condition.
    Long,
}

impl TableLayout {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table2" | "table_ii" | "ii" => Ok(Self::Table2),
            "table3" | "table_iii" | "iii" => Ok(Self::Table3),
            "table4" | "table_iv" | "iv" => Ok(Self::Table4),
            "long" => Ok(Self::Long),
            other => Err(Error::InvalidArgument(format!("unknown table layout {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Table2 => "table2",
            Self::Table3 => "table3",
            Self::Table4 => "table4",
            Self::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub controller: ControllerKind,
    pub use_pt: bool,
    pub extended: bool,
}

impl GridCell {
    pub fn new(controller: ControllerKind, use_pt: bool, extended: bool) -> Self {
        Self {
            controller,
            use_pt,
            extended,
        }
    }

    pub fn spec(&self) -> Result<ControllerSpec> {
        ControllerSpec::from_sensors(self.controller, self.use_pt, self.extended)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Generate { config: DemoConfig, condition: String },
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub name: String,
    pub layout: TableLayout,
    pub variants: Vec<Variant>,
    pub cells: Vec<GridCell>,
    /// Built-in condition names or profile file paths.
    pub conditions: Vec<String>,
    pub rollouts: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub corpus: CorpusSource,
    pub rollout: RolloutConfig,
}

fn default_corpus() -> CorpusSource {
    CorpusSource::Generate {
        config: DemoConfig::default(),
        condition: "summer".into(),
    }
}

impl ExperimentGrid {
    /// Summer-trained NNet/NNetV2 on `D_II` with `<θ1, θ2, p_d>`, tested in summer and winter.
    pub fn table2() -> Self {
        use ControllerKind::*;
        Self {
            name: "table2".into(),
            layout: TableLayout::Table2,
            variants: vec![Variant::DII],
            cells: vec![GridCell::new(Nnet, false, false), GridCell::new(NnetV2, false, false)],
            conditions: vec!["summer".into(), "winter_ice".into()],
            rollouts: 15,
            seed: 2,
            train: TrainConfig::default(),
            corpus: default_corpus(),
            rollout: RolloutConfig::default(),
        }
    }

    /// NNet/NNetV2 with and without `p_t`, `D_II` versus `D_I`, tested in winter.
    pub fn table3() -> Self {
        use ControllerKind::*;
        Self {
            name: "table3".into(),
            layout: TableLayout::Table3,
            variants: vec![Variant::DII, Variant::DI],
            cells: [Nnet, NnetV2]
                .into_iter()
                .flat_map(|k| [GridCell::new(k, false, false), GridCell::new(k, true, false)])
                .collect(),
            conditions: vec!["winter_ice".into()],
            rollouts: 30,
            seed: 3,
            ..Self::table2()
        }
    }

    /// NNetV2/ANNet/DANNet over the three sensor blocks, `D_I` versus `D_II`, tested in winter.
    pub fn table4() -> Self {
        use ControllerKind::*;
        let blocks = [(false, false), (true, false), (true, true)];
        Self {
            name: "table4".into(),
            layout: TableLayout::Table4,
            variants: vec![Variant::DI, Variant::DII],
            cells: blocks
                .into_iter()
                .flat_map(|(pt, ext)| [NnetV2, Annet, Dannet].map(|k| GridCell::new(k, pt, ext)))
                .collect(),
            conditions: vec!["winter_ice".into()],
            rollouts: 30,
            seed: 4,
            ..Self::table2()
        }
    }

    pub fn preset(layout: TableLayout) -> Result<Self> {
        match layout {
            TableLayout::Table2 => Ok(Self::table2()),
            TableLayout::Table3 => Ok(Self::table3()),
            TableLayout::Table4 => Ok(Self::table4()),
            TableLayout::Long => Err(Error::InvalidArgument("the long layout has no preset cells".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.cells.is_empty() || self.conditions.is_empty() {
            return Err(Error::InvalidArgument("grid needs variants, cells and conditions".into()));
        }
        if self.rollouts == 0 {
            return Err(Error::InvalidArgument("grid needs at least one rollout per cell".into()));
        }
        match self.layout {
            TableLayout::Table2 if self.variants.len() != 1 => Err(Error::InvalidArgument(
                "table2 layout takes exactly one dataset variant".into(),
            )),
            TableLayout::Table3 | TableLayout::Table4 if self.conditions.len() != 1 => Err(Error::InvalidArgument(
                format!("{} layout takes exactly one test condition", self.layout.name()),
            )),
            _ => self.train.validate(),
        }
    }

    /// Parses a grid file. Omitted axes fall back to the layout's preset.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let f: GridFile = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("grid file: {e}")))?;
        let layout = TableLayout::parse(f.layout.as_deref().unwrap_or("long"))?;
        let mut g = match Self::preset(layout) {
            Ok(p) => p,
            Err(_) => Self {
                name: "grid".into(),
                layout,
                variants: vec![],
                cells: vec![],
                conditions: vec![],
                ..Self::table2()
            },
        };
        if let Some(n) = f.name {
            g.name = n;
        }
        if let Some(v) = f.variants {
            g.variants = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(c) = f.conditions {
            g.conditions = c;
        }
        if let Some(cells) = f.cells {
            g.cells = cells
                .into_iter()
                .map(|c| Ok(GridCell::new(c.controller.parse()?, c.use_pt, c.extended)))
                .collect::<Result<_>>()?;
        }
        if let Some(r) = f.rollouts {
            g.rollouts = r;
        }
        if let Some(s) = f.seed {
            g.seed = s;
        }
        if let Some(m) = f.max_steps {
            g.rollout.max_steps = m;
        }
        if let Some(t) = f.train {
            let d = g.train;
            g.train = TrainConfig {
                epochs: t.epochs.unwrap_or(d.epochs),
                batch_size: t.batch_size.unwrap_or(d.batch_size),
                lr: t.lr.unwrap_or(d.lr),
                dropout_p: t.dropout.unwrap_or(d.dropout_p),
                ..d
            };
        }
        if let Some(c) = f.corpus {
            g.corpus = match c.demos {
                Some(dir) => {
                    let p = PathBuf::from(dir);
                    CorpusSource::Directory(match base_dir {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    })
                }
                None => {
                    let d = DemoConfig::default();
                    CorpusSource::Generate {
                        config: DemoConfig {
                            n: c.n.unwrap_or(d.n),
                            rate_hz: c.rate_hz.unwrap_or(d.rate_hz),
                            full_fraction: c.full_fraction.unwrap_or(d.full_fraction),
                            ..d
                        },
                        condition: c.condition.unwrap_or_else(|| "summer".into()),
                    }
                }
            };
        }
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    name: Option<String>,
    layout: Option<String>,
    variants: Option<Vec<String>>,
    conditions: Option<Vec<String>>,
    rollouts: Option<usize>,
    seed: Option<u64>,
    max_steps: Option<usize>,
    train: Option<TrainSection>,
    corpus: Option<CorpusSection>,
    cells: Option<Vec<CellSection>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    dropout: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSection {
    demos: Option<String>,
    n: Option<usize>,
    rate_hz: Option<f64>,
    full_fraction: Option<f64>,
    condition: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellSection {
    controller: String,
    #[serde(default)]
    use_pt: bool,
    #[serde(default)]
    extended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: GridCell,
    pub variant: Variant,
    pub condition: String,
    /// Percent; `None` when the cell was skipped.
    pub success_rate: Option<f64>,
    pub skipped: Option<String>,
    pub checkpoint_hash: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub results: Vec<CellResult>,
    /// Results in the grid's table layout.
    pub table_csv: String,
    /// One row per cell, variant and condition.
    pub long_csv: String,
    pub manifest: RunManifest,
}

fn corpus(grid: &ExperimentGrid, root: &RngState) -> Result<(Vec<Demonstration>, String)> {
    match &grid.corpus {
        CorpusSource::Directory(dir) => Ok((load_demonstrations(dir)?, format!("dir:{}", dir.display()))),
        CorpusSource::Generate { config, condition } => {
            let cond = ConditionProfile::resolve(condition)?;
            let demos = generate_demonstrations(config, &cond, &mut root.derive(100))?;
            Ok((
                demos,
                format!(
                    "generated n={} rate_hz={} full_fraction={} condition={}",
                    config.n, config.rate_hz, config.full_fraction, condition
                ),
            ))
        }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(String::new, |v| format!("{v:.1}"))
}

/// Trains every (cell, variant) pair once and scores it on every condition.
/// Invalid cells are skipped with a logged reason.
pub fn run_experiment_grid(grid: &ExperimentGrid) -> Result<GridOutcome> {
    grid.validate()?;
    let root = RngState::new(grid.seed);
    let (demos, corpus_desc) = corpus(grid, &root)?;
    let conditions: Vec<ConditionProfile> =
        grid.conditions.iter().map(|c| ConditionProfile::resolve(c)).collect::<Result<_>>()?;

    let mut manifest = RunManifest::new();
    manifest
        .set("grid", &grid.name)
        .set("layout", grid.layout.name())
        .set("seed", grid.seed)
        .set("train", grid.train.summary())
        .set("rollouts", grid.rollouts)
        .set("max_steps", grid.rollout.max_steps)
        .set("corpus", corpus_desc)
        .set("conditions", grid.conditions.join(","));

    let mut datasets: BTreeMap<usize, Result<Dataset>> = BTreeMap::new();
    for (vi, v) in grid.variants.iter().enumerate() {
        let ds = build_dataset(&demos, &DatasetSpec::for_variant(*v));
        match &ds {
            Ok(d) => {
                manifest.set(
                    format!("dataset.{}", v.label()),
                    format!("demos={} samples={}", d.demos.len(), d.len()),
                );
            }
            Err(e) => log::warn!("dataset {} unavailable: {e}", v.label()),
        }
        datasets.insert(vi, ds);
    }

    let mut results = Vec::new();
    for (ci, cell) in grid.cells.iter().enumerate() {
        for (vi, &variant) in grid.variants.iter().enumerate() {
            let skip = |reason: String| {
                log::warn!("skipping {} p_t={} s'={} on {}: {reason}", cell.controller, cell.use_pt, cell.extended, variant.label());
                grid.conditions.iter().map(move |c| CellResult {
                    cell: *cell,
                    variant,
                    condition: c.clone(),
                    success_rate: None,
                    skipped: Some(reason.clone()),
                    checkpoint_hash: None,
                })
            };
            let spec = match cell.spec() {
                Ok(s) => s,
                Err(e) => {
                    results.extend(skip(e.to_string()));
                    continue;
                }
            };
            let data = match &datasets[&vi] {
                Ok(d) => d,
                Err(e) => {
                    results.extend(skip(e.to_string()));
                    continue;
                }
            };
            let cfg = TrainConfig {
                seed: root.derive(1000 + (ci * grid.variants.len() + vi) as u64).next_u64(),
                ..grid.train
            };
            let (mut params, _) = train(spec, data, &cfg)?;
            let hash = super::content_hash(&encode_checkpoint(&params));
            manifest.set(
                format!("cell.{ci}.{}", variant.label()),
                format!("{} p_t={} s'={} seed={} checkpoint={hash}", cell.controller, cell.use_pt, cell.extended, cfg.seed),
            );
            for (k, cond) in conditions.iter().enumerate() {
                // identical rollout seeds across cells for paired comparisons
                let rate = success_rate(&mut params, cond, grid.rollouts, grid.rollout, &root.derive(5000 + k as u64))?;
                log::info!("{} p_t={} s'={} {} on {}: {rate:.1}%", cell.controller, cell.use_pt, cell.extended, variant.label(), cond.name);
                results.push(CellResult {
                    cell: *cell,
                    variant,
                    condition: grid.conditions[k].clone(),
                    success_rate: Some(rate),
                    skipped: None,
                    checkpoint_hash: Some(hash.clone()),
                });
            }
        }
    }
    let table_csv = render_table(grid, &results);
    let long_csv = render_long(&results);
    manifest.hash("table_csv", table_csv.as_bytes());
    Ok(GridOutcome {
        results,
        table_csv,
        long_csv,
        manifest,
    })
}

fn lookup(results: &[CellResult], cell: &GridCell, variant: Variant, condition: &str) -> Option<f64> {
    results
        .iter()
        .find(|r| &r.cell == cell && r.variant == variant && r.condition == condition)
        .and_then(|r| r.success_rate)
}

fn render_long(results: &[CellResult]) -> String {
    let mut out = String::from("controller,p_t,s_prime,dataset,condition,success_rate,note\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cell.controller.display_name(),
            yes_no(r.cell.use_pt),
            yes_no(r.cell.extended),
            r.variant.label(),
            r.condition,
            fmt_rate(r.success_rate),
            r.skipped.as_deref().map_or(String::new(), |s| format!("\"skipped: {}\"", s.replace('"', "'")))
        ));
    }
    out
}

fn render_table(grid: &ExperimentGrid, results: &[CellResult]) -> String {
    let mut out = String::new();
    match grid.layout {
        TableLayout::Table2 => {
            let v = grid.variants[0];
            out.push_str("test");
            for c in &grid.cells {
                out.push_str(&format!(",{}", c.controller.display_name()));
            }
            out.push('\n');
            for cond in &grid.conditions {
                out.push_str(cond);
                for c in &grid.cells {
                    out.push_str(&format!(",{}", fmt_rate(lookup(results, c, v, cond))));
                }
                out.push('\n');
            }
        }
        TableLayout::Table3 | TableLayout::Table4 => {
            let cond = &grid.conditions[0];
            let with_ext = grid.layout == TableLayout::Table4;
            out.push_str(if with_ext { "controller,p_t,s_prime" } else { "controller,p_t" });
            for v in &grid.variants {
                out.push_str(&format!(",{}", v.label()));
            }
            out.push('\n');
            for c in &grid.cells {
                out.push_str(&format!("{},{}", c.controller.display_name(), yes_no(c.use_pt)));
                if with_ext {
                    out.push_str(&format!(",{}", yes_no(c.extended)));
                }
                for v in &grid.variants {
                    out.push_str(&format!(",{}", fmt_rate(lookup(results, c, *v, cond))));
                }
                out.push('\n');
            }
        }
        TableLayout::Long => out = render_long(results),
    }
    out
}
