//! Subcommands. Each one resolves its configuration, echoes it to
//! `<output_dir>/resolved.toml`, and writes nothing outside the output
//! directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crossaug_core::augment::{augment_images, augment_with_model, fit_donor_mapping, fit_image_mapping, run_augmentation};
use crossaug_core::autoencoder::{FitHistory, MappingModel};
use crossaug_core::data::{make_synthetic_pair, mask_images, partition, synth_digits, AlignedPair, ImageMaskSpec, ImageSet, Scheme, Side};
use crossaug_core::RngState;

use crate::config::{Direction, RunConfig, Source};
use crate::error::{CliError, Result};
use crate::io::cache::{write_cache, EncodedCache};
use crate::io::{idx, model, tabular, write_bytes};
use crate::{experiment, gradcheck, logging, report, workload};

#[derive(Parser, Debug)]
#[command(name = "crossaug", version, about = "Cross-dataset feature augmentation with autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` and `experiment.seeds`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct SideArg {
    /// Recipient side for images (A = left, B = right), or recipient table
    /// (A = first, B = second).
    #[arg(long, value_parser = ["A", "B"])]
    side: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mask images to one side plus the shared centre band.
    MaskImages {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        side: SideArg,
    },
    /// Fit the donor's shared-to-full mapping and save it.
    FitMapping {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        side: SideArg,
        /// Overrides `mapping.variant`.
        #[arg(long, value_parser = ["ae", "vae"])]
        variant: Option<String>,
    },
    /// Append synthetic donor features to the recipient.
    Augment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        side: SideArg,
        #[arg(long, value_parser = ["ae", "vae"])]
        variant: Option<String>,
        /// Use a saved mapping instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the experiment grid and write results.csv / results.svg.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        side: SideArg,
        /// Parallel grid cells; 1 is the reproducible serial mode.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Redraw the chart from a results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient checks for every layer kind.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Write the synthetic two-table pair as CSV files.
    SynthPair {
        #[command(flatten)]
        common: Common,
    },
    /// Write procedurally drawn digits as IDX files.
    SynthDigits {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    logging::init(log::LevelFilter::Info);
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("event=failed error={:?}", e.to_string());
            e.exit_code()
        }
    }
}

fn prepare(common: &Common, side: Option<&SideArg>, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.experiment.seeds = vec![s];
    }
    if let Some(s) = side.and_then(|s| s.side.clone()) {
        cfg.experiment.direction = if s == "A" { Direction::AugmentA } else { Direction::AugmentB };
        cfg.image.side = s;
    }
    edit(&mut cfg);
    let cfg = cfg.resolve()?;
    logging::init(match cfg.log_level.as_str() {
        "error" => log::LevelFilter::Error,
        "warn" => log::LevelFilter::Warn,
        "debug" => log::LevelFilter::Debug,
        "trace" => log::LevelFilter::Trace,
        _ => log::LevelFilter::Info,
    });
    let path = cfg.output_dir.join("resolved.toml");
    write_bytes(&path, cfg.to_toml().as_bytes())?;
    log::info!("event=config_resolved path={:?} seed={}", path.display().to_string(), cfg.seed);
    Ok(cfg)
}

fn written(path: &Path) {
    log::info!("event=written path={:?}", path.display().to_string());
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::MaskImages { common, side } => mask_cmd(&prepare(&common, Some(&side), |_| {})?),
        Command::FitMapping { common, side, variant } => {
            fit_cmd(&prepare(&common, Some(&side), |c| set_variant(c, variant))?)
        }
        Command::Augment { common, side, variant, model } => {
            augment_cmd(&prepare(&common, Some(&side), |c| set_variant(c, variant))?, model.as_deref())
        }
        Command::Experiment { common, side, jobs } => experiment_cmd(&prepare(&common, Some(&side), |_| {})?, jobs as usize),
        Command::Report { input, out } => report_cmd(&input, &out),
        Command::Gradcheck { seeds } => gradcheck_cmd(seeds),
        Command::SynthPair { common } => synth_pair_cmd(&prepare(&common, None, |_| {})?),
        Command::SynthDigits { common } => synth_digits_cmd(&prepare(&common, None, |_| {})?),
    }
    .map(|()| 0)
    .or_else(|e| match e {
        CliError::Usage(ref m) if m.starts_with("exit:") => Ok(m[5..].parse().unwrap_or(1)),
        other => Err(other),
    })
}

fn set_variant(cfg: &mut RunConfig, variant: Option<String>) {
    if let Some(v) = variant {
        cfg.mapping.variant = v;
    }
}

fn image_spec(cfg: &RunConfig, images: &ImageSet) -> Result<ImageMaskSpec> {
    let (h, w, c) = images.dims();
    ImageMaskSpec::new(w, h, c, cfg.image.common, cfg.side()?).map_err(|e| CliError::Config(format!("image.common: {e}")))
}

/// Recipient and donor halves (first half is A).
fn image_halves(images: &ImageSet, side: Side) -> Result<(ImageSet, ImageSet)> {
    let (a, b) = partition(images.len(), Scheme::AbHalves, &mut RngState::new(0))?;
    let (a, b) = (images.select(&a), images.select(&b));
    Ok(if side == Side::A { (a, b) } else { (b, a) })
}

fn oriented_pair(cfg: &RunConfig) -> Result<AlignedPair> {
    let pair = workload::load_pair(cfg)?;
    Ok(if cfg.side()? == Side::A { pair } else { pair.swapped() })
}

fn write_history(path: &Path, h: &FitHistory) -> Result<()> {
    let mut s = String::from("epoch,loss,reconstruction,kl,validation\n");
    for e in 0..h.loss.len() {
        let v = h.validation.get(e).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{v}", e + 1, h.loss[e], h.reconstruction[e], h.kl[e]);
    }
    write_bytes(path, s.as_bytes())?;
    written(path);
    Ok(())
}

fn save_model(cfg: &RunConfig, m: &MappingModel, h: &FitHistory) -> Result<()> {
    let path = cfg.output_dir.join("mapping.txt");
    model::write_mapping(&path, m)?;
    written(&path);
    write_history(&cfg.output_dir.join("fit_history.csv"), h)
}

fn mask_cmd(cfg: &RunConfig) -> Result<()> {
    let images = workload::load_images(cfg)?;
    let spec = image_spec(cfg, &images)?;
    let (masked, common) = mask_images(&images.images, &spec)?;
    let out = &cfg.output_dir;
    idx::write_images(&out.join("masked-images.idx"), &masked)?;
    idx::write_labels(&out.join("labels.idx"), &images.labels)?;
    let mut columns = Vec::new();
    for col in spec.common_cols() {
        for row in 0..spec.height {
            for ch in 0..spec.channels {
                columns.push(format!("col{col}_row{row}_ch{ch}"));
            }
        }
    }
    let cache = EncodedCache {
        columns,
        data: common,
        labels: Some(images.labels.clone()),
        row_ids: Some(images.ids.clone()),
    };
    write_cache(&out.join("common.bin"), &cache)?;
    for f in ["masked-images.idx", "labels.idx", "common.bin"] {
        written(&out.join(f));
    }
    Ok(())
}

fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    let mut plan = cfg.plan()?;
    let mut rng = RngState::new(cfg.seed);
    if cfg.data.source.is_image() {
        let images = workload::load_images(cfg)?;
        let spec = image_spec(cfg, &images)?;
        let (_, donor) = image_halves(&images, spec.side)?;
        let (m, h) = fit_image_mapping(&donor.images, &spec, &plan, &mut rng)?;
        save_model(cfg, &m, &h)
    } else {
        let pair = oriented_pair(cfg)?;
        plan.donor = pair.b.name.clone();
        plan.recipient = pair.a.name.clone();
        let (m, h) = fit_donor_mapping(&pair, &plan, &mut rng)?;
        save_model(cfg, &m, &h)
    }
}

fn augment_cmd(cfg: &RunConfig, model_path: Option<&Path>) -> Result<()> {
    let mut plan = cfg.plan()?;
    let mut rng = RngState::new(cfg.seed);
    let loaded = model_path.map(model::read_mapping).transpose()?;
    let out = &cfg.output_dir;
    if cfg.data.source.is_image() {
        let images = workload::load_images(cfg)?;
        let spec = image_spec(cfg, &images)?;
        let (recipient, donor) = image_halves(&images, spec.side)?;
        let m = match loaded {
            Some(m) => m,
            None => {
                let (m, h) = fit_image_mapping(&donor.images, &spec, &plan, &mut rng)?;
                save_model(cfg, &m, &h)?;
                m
            }
        };
        let (masked, _) = mask_images(&recipient.images, &spec)?;
        let augmented = augment_images(&masked, &spec, &m, plan.sampling, &mut rng)?;
        let path = out.join("augmented-images.idx");
        idx::write_images(&path, &augmented)?;
        idx::write_labels(&out.join("labels.idx"), &recipient.labels)?;
        let kept: Vec<usize> = spec.kept_cols().collect();
        let mut side = String::from("column,source\n");
        for c in 0..spec.width {
            let _ = writeln!(side, "col{c},{}", if kept.contains(&c) { "real" } else { "synthetic" });
        }
        let side_path = out.join("augmented-images.provenance.csv");
        write_bytes(&side_path, side.as_bytes())?;
        for p in [&path, &side_path] {
            written(p);
        }
        Ok(())
    } else {
        let pair = oriented_pair(cfg)?;
        plan.donor = pair.b.name.clone();
        plan.recipient = pair.a.name.clone();
        let aug = match loaded {
            Some(m) => augment_with_model(&pair, &plan, &m, &mut rng)?,
            None => {
                let (aug, m, h) = run_augmentation(&pair, &plan, &mut rng)?;
                save_model(cfg, &m, &h)?;
                aug
            }
        };
        let path = out.join("augmented.csv");
        let side = tabular::write_augmented(&path, &aug)?;
        let cache_path = out.join("augmented.bin");
        write_cache(
            &cache_path,
            &EncodedCache {
                columns: aug.columns.iter().map(|c| c.name.clone()).collect(),
                data: aug.data.clone(),
                labels: Some(aug.labels.clone()),
                row_ids: aug.row_ids.clone(),
            },
        )?;
        log::info!(
            "event=augmented rows={} columns={} synthetic={}",
            aug.data.rows(),
            aug.columns.len(),
            aug.synthetic_count()
        );
        for p in [&path, &side, &cache_path] {
            written(p);
        }
        Ok(())
    }
}

fn x_label(images: bool) -> &'static str {
    if images {
        "common columns"
    } else {
        "donor rows"
    }
}

fn experiment_cmd(cfg: &RunConfig, jobs: usize) -> Result<()> {
    let work = workload::load(cfg)?;
    let results = experiment::run_grid(cfg, &work, jobs)?;
    let rows = report::rows(&results);
    let csv_path = cfg.output_dir.join("results.csv");
    report::write_csv(&csv_path, &rows)?;
    let svg_path = cfg.output_dir.join("results.svg");
    report::write_svg(&svg_path, &rows, x_label(cfg.data.source.is_image()))?;
    written(&csv_path);
    written(&svg_path);
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("event=cells_failed failed={failed} total={}", results.len());
    }
    if failed == results.len() {
        return Err(CliError::Usage("exit:1".into()));
    }
    Ok(())
}

fn report_cmd(input: &Path, out: &Path) -> Result<()> {
    let rows = report::read_csv(input)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{} has no result rows", input.display())));
    }
    let images = rows[0].cell.starts_with("n=");
    let svg = out.join("results.svg");
    report::write_svg(&svg, &rows, x_label(images))?;
    let csv = out.join("results.csv");
    report::write_csv(&csv, &rows)?;
    written(&svg);
    written(&csv);
    Ok(())
}

fn gradcheck_cmd(seeds: u64) -> Result<()> {
    let results = gradcheck::run_suite(seeds.max(1))?;
    let mut all_ok = true;
    for (kind, err) in &results {
        let ok = *err < gradcheck::TOLERANCE;
        all_ok &= ok;
        println!("layer={kind} max_rel_error={err:.3e} seeds={seeds} ok={ok}");
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Usage("exit:1".into()))
    }
}

fn synth_pair_cmd(cfg: &RunConfig) -> Result<()> {
    let p = make_synthetic_pair(&cfg.synth())?;
    let mut doc = RunConfig {
        output_dir: cfg.output_dir.join("run"),
        ..cfg.clone()
    };
    doc.data.source = Source::TabularCsv;
    doc.data.common = p.common.clone();
    for (ds, months, table) in [(&p.a, &p.months_a, &mut doc.data.a), (&p.b, &p.months_b, &mut doc.data.b)] {
        let path = cfg.output_dir.join(format!("{}.csv", ds.name));
        let ids = ds.row_ids().map(|i| i.iter().map(u64::to_string).collect()).unwrap_or_default();
        tabular::write_table(
            &path,
            ds,
            &[("survival_months", months.iter().map(|m| m.to_string()).collect()), ("id", ids)],
        )?;
        written(&path);
        table.path = path;
        table.name = ds.name.clone();
        table.label_column = "survival_months".into();
        table.label = crate::config::LabelKind::SurvivalMonths;
        table.id_column = "id".into();
    }
    let path = cfg.output_dir.join("pair.toml");
    write_bytes(&path, doc.to_toml().as_bytes())?;
    written(&path);
    Ok(())
}

fn synth_digits_cmd(cfg: &RunConfig) -> Result<()> {
    let set = synth_digits(cfg.data.rows, cfg.data.seed)?;
    for (name, r) in [
        ("images.idx", idx::write_images(&cfg.output_dir.join("images.idx"), &set.images)),
        ("labels.idx", idx::write_labels(&cfg.output_dir.join("labels.idx"), &set.labels)),
    ] {
        r?;
        written(&cfg.output_dir.join(name));
    }
    Ok(())
}
