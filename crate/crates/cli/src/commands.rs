use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use reuse_inr::codec::unpack_model;
use reuse_inr::network::{count_macs, NetworkConfig, ParameterStore};
use reuse_inr::pipeline::{self, package, Packed};
use reuse_inr::training::{write_log_csv, EpochLog, FitOutput, TrainConfig};
use reuse_inr::video::{
    bd_rate, bpp, load_raw, psnr, save_raw, sidecar_path, synth_video, RdCurve, RdPoint, SynthKind,
};
use reuse_inr::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::manifest::Recorder;
use crate::run_config::{resolve, RunConfig};
use crate::ConfigArgs;

pub const STREAM_FILE: &str = "stream.inrc";
pub const LOG_FILE: &str = "train_log.csv";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const DECODED_FILE: &str = "decoded.rgb";
pub const RD_FILE: &str = "rd.csv";

/// One row of an RD table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub label: String,
    pub bpp: f64,
    pub psnr: f64,
}

fn progress(row: &EpochLog) {
    if row.epoch.is_multiple_of(10) {
        eprintln!(
            "epoch {:>4} {:<3} loss {:.6} psnr {:.2} lr {:.2e}",
            row.epoch, row.stage, row.loss, row.psnr, row.lr
        );
    }
}

/// Weights of an existing bitstream, laid out for `cfg`.
fn weights_from(path: &Path, cfg: &NetworkConfig) -> Result<ParameterStore> {
    let (_, store) = unpack_model(&fs::read(path)?)?;
    ParameterStore::from_tensors(cfg, store.tensors().cloned().collect())
}

/// Trains (unless `train` is `None`) and packs into `dir`, recording every
/// written file. Shared by `encode` and the ablation cells.
pub fn encode_into(
    dir: &Path,
    video: &reuse_inr::video::VideoBuffer,
    rc: &RunConfig,
    init: ParameterStore,
    train: Option<&TrainConfig>,
    rec: &mut Recorder,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Option<FitOutput>, Packed)> {
    fs::create_dir_all(dir)?;
    let cfg_file = dir.join(RUN_CONFIG_FILE);
    fs::write(&cfg_file, rc.to_text())?;
    rec.output(&cfg_file)?;
    let (fit, packed) = match train {
        None => (None, package(video, &rc.network, &init, rc.train.quant_bits)?),
        Some(tcfg) => {
            let (fit, packed) = pipeline::encode(video, &rc.network, tcfg, init, on_epoch)?;
            let log = dir.join(LOG_FILE);
            write_log_csv(&fit.log, fs::File::create(&log)?)?;
            rec.output(&log)?;
            rec.metric("steps", fit.steps as f64);
            rec.metric("diverged", fit.diverged as u8 as f64);
            (Some(fit), packed)
        }
    };
    let stream = dir.join(STREAM_FILE);
    fs::write(&stream, &packed.bitstream)?;
    rec.output(&stream)?;
    rec.metric("bytes", packed.bitstream.len() as f64);
    rec.metric("bpp", packed.bpp);
    rec.metric("psnr", packed.psnr);
    Ok((fit, packed))
}

pub fn encode(
    argv: &[String],
    video_path: &Path,
    args: &ConfigArgs,
    out: &Path,
    init: Option<&Path>,
    no_train: bool,
) -> Result<()> {
    let (rc, cfg_path) = resolve(args)?;
    let mut rec = Recorder::start("encode", argv);
    rec.config(cfg_path, Some(rc.train.seed));
    let video = load_raw(video_path)?;
    rec.input(video_path)?;
    let weights = match init {
        Some(p) => {
            rec.input(p)?;
            weights_from(p, &rc.network)?
        }
        None => ParameterStore::init(&rc.network, rc.train.seed),
    };
    let train = (!no_train).then_some(&rc.train);
    let (fit, packed) = encode_into(out, &video, &rc, weights, train, &mut rec, progress)?;
    if fit.as_ref().is_some_and(|f| f.diverged) {
        eprintln!("warning: training loss rose between 50-epoch windows");
    }
    println!("bytes={} bpp={:.4} psnr={:.4}", packed.bitstream.len(), packed.bpp, packed.psnr);
    rec.finish(out)?;
    Ok(())
}

pub fn decode(argv: &[String], bitstream: &Path, out: &Path) -> Result<()> {
    let mut rec = Recorder::start("decode", argv);
    let bytes = fs::read(bitstream)?;
    rec.input(bitstream)?;
    let t0 = Instant::now();
    let (_, video) = pipeline::decode(&bytes)?;
    let seconds = t0.elapsed().as_secs_f64();
    fs::create_dir_all(out)?;
    let path = out.join(DECODED_FILE);
    save_raw(&path, &video)?;
    rec.output(&path)?;
    rec.output(&sidecar_path(&path))?;
    rec.metric("decode_seconds", seconds);
    let (t, h, w) = video.dims();
    println!("frames={t} height={h} width={w} decode_seconds={seconds:.3}");
    rec.finish(out)?;
    Ok(())
}

/// Appends `row` to the RD table at `path`, writing the header first when the
/// file is new.
pub fn append_rd(path: &Path, row: &RdRow) -> Result<()> {
    let fresh = !path.exists();
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(f);
    w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn eval(
    argv: &[String],
    reference: &Path,
    decoded: &Path,
    bitstream: Option<&Path>,
    label: &str,
    out: Option<&Path>,
) -> Result<()> {
    let mut rec = Recorder::start("eval", argv);
    let a = load_raw(reference)?;
    let b = load_raw(decoded)?;
    rec.input(reference)?;
    rec.input(decoded)?;
    let db = psnr(&a, &b)?;
    rec.metric("psnr", db);
    let mut line = format!("psnr={db:.4}");
    let mut rate = None;
    if let Some(bs) = bitstream {
        let (t, h, w) = a.dims();
        let r = bpp(fs::metadata(bs)?.len() as usize, t, h, w);
        rec.input(bs)?;
        rec.metric("bpp", r);
        line += &format!(" bpp={r:.4}");
        rate = Some(r);
    }
    println!("{line}");
    if let (Some(dir), Some(bpp)) = (out, rate) {
        fs::create_dir_all(dir)?;
        let table = dir.join(RD_FILE);
        append_rd(&table, &RdRow { label: label.into(), bpp, psnr: db })?;
        rec.output(&table)?;
        rec.finish(dir)?;
    }
    Ok(())
}

pub fn read_rd(path: &Path) -> Result<Vec<RdRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))).collect()
}

fn curve(path: &Path) -> Result<RdCurve> {
    RdCurve::new(read_rd(path)?.iter().map(|r| RdPoint { bpp: r.bpp, psnr: r.psnr }).collect())
}

pub fn bdrate(anchor: &Path, test: &Path) -> Result<()> {
    let bd = bd_rate(&curve(anchor)?, &curve(test)?)?;
    // Adding zero folds a negative zero into "0.000%".
    let pct = bd.percent + 0.0;
    let fit = if bd.piecewise { "piecewise-linear" } else { "cubic" };
    println!("bd_rate={pct:.3}% fit={fit}");
    Ok(())
}

pub fn macs(args: &ConfigArgs, frames: Option<usize>, height: Option<usize>, width: Option<usize>) -> Result<()> {
    let (rc, _) = resolve(args)?;
    let cfg = &rc.network;
    cfg.validate()?;
    let n = count_macs(cfg, frames.unwrap_or(cfg.frames), height.unwrap_or(cfg.height), width.unwrap_or(cfg.width));
    println!("macs={n} gmacs={:.2}", n as f64 / 1e9);
    Ok(())
}

pub fn synth(argv: &[String], kinds: &[String], dims: (usize, usize, usize), seed: u64, out: &Path) -> Result<()> {
    let kinds: Vec<SynthKind> = if kinds.is_empty() {
        SynthKind::ALL.to_vec()
    } else {
        kinds.iter().map(|k| k.parse()).collect::<Result<_>>()?
    };
    let mut rec = Recorder::start("synth", argv);
    rec.config(None, Some(seed));
    fs::create_dir_all(out)?;
    let (t, h, w) = dims;
    for kind in kinds {
        let video = synth_video(kind, t, h, w, seed)?;
        let path: PathBuf = out.join(format!("{}.rgb", kind.name()));
        save_raw(&path, &video)?;
        rec.output(&path)?;
        rec.output(&sidecar_path(&path))?;
        println!("{}", path.display());
    }
    rec.finish(out)?;
    Ok(())
}
