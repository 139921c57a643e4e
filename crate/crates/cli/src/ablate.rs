//! Ablation grids: one encode per (configuration, sequence) cell.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use clap::ValueEnum;
use reuse_inr::network::{count_macs_native, Granularity, NetworkConfig, ParameterStore, ReuseMode, ReuseSpec};
use reuse_inr::video::{load_raw, VideoBuffer};
use reuse_inr::{Error, Result};
use serde::Serialize;

use crate::commands::encode_into;
use crate::manifest::Recorder;
use crate::run_config::{resolve, RunConfig};
use crate::ConfigArgs;

/// Environment variable bounding the number of cells trained at once.
pub const THREADS_ENV: &str = "REUSE_INR_THREADS";

/// Deepening multiplier of the granularity suite and the default model.
pub const DEFAULT_MULTIPLIER: usize = 2;

/// The location suite stacks two extra copies of one ConvNeXt block.
pub const LOCATION_MULTIPLIER: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Reuse in one of the first three blocks.
    Location,
    /// Multipliers 1 through 4 on every eligible block.
    Times,
    /// Deepening at each granularity.
    Granularity,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Location => "location",
            Suite::Times => "times",
            Suite::Granularity => "granularity",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub name: String,
    pub network: NetworkConfig,
}

/// The configurations of `suite` built on `base`.
pub fn cells(suite: Suite, base: &NetworkConfig) -> Result<Vec<Cell>> {
    let cell = |name: &str, network: NetworkConfig| Cell { name: name.into(), network };
    let cells: Vec<Cell> = match suite {
        Suite::Location => {
            let names = ["shallow", "medium", "deep"];
            if base.num_blocks() < names.len() || !(0..names.len()).all(|k| base.reuse_eligible(k)) {
                return Err(Error::Config(format!(
                    "the location suite needs three reuse-eligible leading blocks, the base network has mask {:?}",
                    base.eligible_mask()
                )));
            }
            names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let mut location = vec![false; base.num_blocks()];
                    location[k] = true;
                    let reuse = ReuseSpec {
                        mode: ReuseMode::Deepen,
                        granularity: Granularity::ConvnextBlock,
                        multiplier: LOCATION_MULTIPLIER,
                        location,
                    };
                    cell(name, base.clone().with_reuse(reuse))
                })
                .collect()
        }
        Suite::Times => {
            (1..=4).map(|m| cell(&format!("m{m}"), base.clone().deepened(m, Granularity::ConvnextBlock))).collect()
        }
        Suite::Granularity => [
            ("conv_layer", Granularity::ConvLayer),
            ("convnext_block", Granularity::ConvnextBlock),
            ("hinerv_block", Granularity::HinervBlock),
        ]
        .into_iter()
        .map(|(name, g)| cell(name, base.clone().deepened(DEFAULT_MULTIPLIER, g)))
        .collect(),
    };
    for c in &cells {
        c.network.validate()?;
    }
    Ok(cells)
}

/// One CSV row per cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub suite: String,
    pub cell: String,
    pub sequence: String,
    pub seed: u64,
    pub bytes: usize,
    pub bpp: f64,
    pub psnr: f64,
    pub macs: u64,
    pub steps: usize,
}

/// `*.rgb` files of `dir`, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "rgb"));
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .rgb files in {}", dir.display())));
    }
    Ok(files)
}

fn threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run(argv: &[String], suite: Suite, corpus: &Path, args: &ConfigArgs, out: &Path) -> Result<()> {
    let (rc, cfg_path) = resolve(args)?;
    let cells = cells(suite, &rc.network)?;
    let files = corpus_files(corpus)?;
    let videos: Vec<VideoBuffer> = files.iter().map(|f| load_raw(f)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..videos.len()).map(move |v| (c, v))).collect();
    let workers = threads()?.min(jobs.len());

    let results: Vec<OnceLock<Result<AblationRow>>> = jobs.iter().map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    let run_job = |i: usize| -> Result<AblationRow> {
        let (c, v) = jobs[i];
        let (cell, video) = (&cells[c], &videos[v]);
        let sequence = stem(&files[v]);
        let dir = out.join("cells").join(format!("{}-{sequence}", cell.name));
        let crc = RunConfig { network: cell.network.clone(), ..rc.clone() };
        let mut rec = Recorder::start("ablate-cell", argv);
        rec.config(cfg_path.clone(), Some(rc.train.seed));
        rec.input(&files[v])?;
        let init = ParameterStore::init(&crc.network, crc.train.seed);
        let (fit, packed) = encode_into(&dir, video, &crc, init, Some(&crc.train), &mut rec, |_| {})?;
        rec.finish(&dir)?;
        let row = AblationRow {
            suite: suite.name().into(),
            cell: cell.name.clone(),
            sequence,
            seed: rc.train.seed,
            bytes: packed.bitstream.len(),
            bpp: packed.bpp,
            psnr: packed.psnr,
            macs: count_macs_native(&cell.network),
            steps: fit.map_or(0, |f| f.steps),
        };
        eprintln!("{} {} {}: {:.4} bpp {:.2} dB", row.suite, row.cell, row.sequence, row.bpp, row.psnr);
        Ok(row)
    };
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let _ = results[i].set(run_job(i));
            });
        }
    });
    let rows: Vec<AblationRow> =
        results.into_iter().map(|r| r.into_inner().expect("every job ran")).collect::<Result<_>>()?;

    // Single writer: the table is assembled only after every cell finished.
    let mut rec = Recorder::start("ablate", argv);
    rec.config(cfg_path, Some(rc.train.seed));
    for f in &files {
        rec.input(f)?;
    }
    let table = out.join(format!("ablate-{}.csv", suite.name()));
    let mut w = csv::Writer::from_path(&table).map_err(|e| Error::Data(e.to_string()))?;
    for row in &rows {
        w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
        println!("{},{},{},{:.4},{:.4},{}", row.cell, row.sequence, row.bytes, row.bpp, row.psnr, row.macs);
    }
    w.flush()?;
    drop(w);
    rec.output(&table)?;
    rec.finish(out)?;
    Ok(())
}
