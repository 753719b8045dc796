//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use koopman_core::dictionary::{Dictionary, NeuralDictionary};
use koopman_core::dynamics::{simulate_linear, simulate_multiregime, simulate_pendulum, LabeledTrajectory};
use koopman_core::edmd::{default_sigma, eig, koopman_modes, solve_koopman};
use koopman_core::hankel::{build_hankel_from_rows, hankel_dmd, DmdRank};
use koopman_core::io::{self, fmt_f64};
use koopman_core::preprocess::{davies_bouldin, fit_truncated_svd};
use koopman_core::reskoopnet::{train_with_observer, BatchSize, TrainReport};
use koopman_core::residual::{pseudospectrum, rectangular_grid, residuals_where_defined};
use koopman_core::{linalg, KoopmanError, Mat, SnapshotPairs, Spectrum};
use serde::Serialize;

use crate::config::{
    self, DbiConfig, GridSpec, HankelConfig, ModesConfig, PlotConfig, PseudospecConfig, RankSpec, SimulateConfig,
    SnapshotFormat, SpectrumConfig, System, TrainRunConfig,
};
use crate::plot;
use crate::{CliError, DbiArgs, HankelArgs, ModesArgs, PlotArgs, PseudospecArgs, SimulateArgs, SpectrumArgs, TrainArgs};

/// Columns of a series table that are bookkeeping rather than state.
const SERIES_META: [&str; 3] = ["trial", "label", "t"];

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    output.with_file_name(name)
}

#[derive(Serialize)]
struct Provenance<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    inputs: Vec<String>,
}

/// Writes `<output>.provenance.json` with the effective config.
fn provenance<C: Serialize>(output: &Path, command: &str, config: &C, inputs: &[PathBuf]) -> Result<(), CliError> {
    let doc = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&doc).map_err(KoopmanError::from)?;
    write_file(&sidecar_path(output), text + "\n")
}

/// Attaches the path to bare I/O errors from core readers and writers.
fn at(path: &Path) -> impl Fn(KoopmanError) -> CliError + '_ {
    move |e| match e {
        KoopmanError::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}

fn config_inputs(config: &Option<PathBuf>, rest: impl IntoIterator<Item = PathBuf>) -> Vec<PathBuf> {
    config.iter().cloned().chain(rest).collect()
}

// ---- simulate ----

pub fn series_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".series.csv");
    out.with_file_name(name)
}

fn format_series(trajectories: &[LabeledTrajectory]) -> String {
    let d = trajectories.first().map_or(0, |t| t.trajectory.dim());
    let mut out = String::from("trial,label,t");
    for j in 0..d {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for (trial, lt) in trajectories.iter().enumerate() {
        for (t, state) in lt.trajectory.states().iter().enumerate() {
            out.push_str(&format!("{trial},{},{t}", lt.label));
            for v in state.coords() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = config::load(a.config.as_deref())?;
    set(&mut cfg.system, a.system);
    set(&mut cfg.n_init, a.n_init);
    set(&mut cfg.n_steps, a.n_steps);
    set(&mut cfg.dt, a.dt);
    set(&mut cfg.seed, a.seed);
    if let Some(text) = &a.matrix {
        cfg.matrix = Some(config::parse_matrix(text).map_err(CliError::Config)?);
    }
    set(&mut cfg.regimes, a.regimes);
    set(&mut cfg.dim, a.dim);
    set(&mut cfg.trials, a.trials);
    set(&mut cfg.noise, a.noise);
    set(&mut cfg.format, a.format);
    cfg.validate()?;

    let data = match cfg.system {
        System::Pendulum => simulate_pendulum(cfg.n_init, cfg.n_steps, cfg.dt, cfg.seed)?,
        System::Linear => {
            let m = linalg::from_rows(cfg.matrix.as_deref().unwrap_or_default())?;
            simulate_linear(m.as_ref(), cfg.n_init, cfg.n_steps, cfg.seed)?
        }
        System::Multiregime => {
            let trajectories = simulate_multiregime(cfg.regimes, cfg.dim, cfg.trials, cfg.n_steps, cfg.noise, cfg.seed)?;
            let series = series_path(&a.out);
            write_file(&series, format_series(&trajectories))?;
            provenance(&series, "simulate", &cfg, &config_inputs(&a.config, []))?;
            let parts: Vec<SnapshotPairs> = trajectories.iter().map(|t| t.trajectory.snapshot_pairs()).collect();
            SnapshotPairs::concat(&parts)?
        }
    };
    io::write_snapshots(&a.out, &data, cfg.format == SnapshotFormat::Binary).map_err(at(&a.out))?;
    provenance(&a.out, "simulate", &cfg, &config_inputs(&a.config, []))?;
    println!("m = {}, d = {}", data.m(), data.d());
    Ok(())
}

// ---- train ----

fn write_training_state(
    dir: &Path,
    dictionary: &NeuralDictionary,
    history: &[(usize, f64)],
    report: Option<&TrainReport>,
) -> Result<(), CliError> {
    create_dir(dir)?;
    write_file(&dir.join("dictionary.json"), dictionary.to_json()?)?;
    write_file(&dir.join("loss.csv"), io::format_loss_csv(history))?;
    if let Some(report) = report {
        let text = serde_json::to_string_pretty(report).map_err(KoopmanError::from)?;
        write_file(&dir.join("report.json"), text + "\n")?;
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainRunConfig = config::load(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    set(&mut cfg.network.hidden, a.hidden);
    set(&mut cfg.network.n_train, a.n_train);
    set(&mut cfg.network.seed, a.network_seed);
    set(&mut cfg.training.learning_rate, a.learning_rate);
    set(&mut cfg.training.sigma, a.sigma);
    set(&mut cfg.training.loss_threshold, a.loss_threshold);
    set(&mut cfg.training.max_epochs, a.max_epochs);
    set(&mut cfg.training.seed, a.seed);
    set(&mut cfg.training.k_update_period, a.k_update_period);
    set(&mut cfg.checkpoint_every, a.checkpoint_every);
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = serde_json::from_value::<BatchSize>(match b.parse::<u64>() {
            Ok(n) => serde_json::Value::from(n),
            Err(_) => serde_json::Value::from(b),
        })
        .map_err(|e| CliError::Config(e.to_string()))?;
    }
    cfg.validate()?;

    let data_path = cfg.data.clone().unwrap_or_default();
    let data = io::read_snapshots(&data_path).map_err(at(&data_path))?;
    let dict = NeuralDictionary::new(data.d(), &cfg.network.hidden, cfg.network.n_train, cfg.network.seed)?;
    create_dir(&a.out_dir)?;
    let checkpoints = a.out_dir.join("checkpoints");
    let every = cfg.checkpoint_every;
    let log_every = (cfg.training.max_epochs / 20).max(1);
    let mut checkpoint_error = None;

    let result = train_with_observer(&data, dict, &cfg.training, |info| {
        if info.epoch % log_every == 0 {
            eprintln!("epoch {:>6}  J = {:e}", info.epoch, info.loss);
        }
        if every > 0 && info.epoch % every == 0 && checkpoint_error.is_none() {
            let dir = checkpoints.join(format!("epoch_{:06}", info.epoch));
            if let Err(e) = write_training_state(&dir, info.dictionary, info.history, None) {
                checkpoint_error = Some(e);
            }
        }
    });
    if let Some(e) = checkpoint_error {
        return Err(e);
    }
    let model = match result {
        Ok(model) => model,
        Err(KoopmanError::NonFiniteLoss { epoch, last_good }) => {
            let dir = checkpoints.join("last_good");
            write_training_state(&dir, &last_good.dictionary, &last_good.report.loss_history, Some(&last_good.report))?;
            eprintln!("last good state written to {}", dir.display());
            return Err(KoopmanError::NonFiniteLoss { epoch, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };

    let inputs = config_inputs(&a.config, [data_path]);
    let dict_path = a.out_dir.join("dictionary.json");
    write_file(&dict_path, model.dictionary.to_json()?)?;
    let spectrum_path = a.out_dir.join("spectrum.csv");
    let comments = vec![
        format!("epochs={}", model.report.epochs_run),
        format!("initial_j={}", fmt_f64(model.report.initial_j)),
        format!("final_j={}", fmt_f64(model.report.final_j)),
        format!("converged={}", model.report.converged),
    ];
    io::write_spectrum(&spectrum_path, &model.spectrum, &comments).map_err(at(&spectrum_path))?;
    let loss_path = a.out_dir.join("loss.csv");
    io::write_loss(&loss_path, &model.report.loss_history).map_err(at(&loss_path))?;
    let report_path = a.out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&model.report).map_err(KoopmanError::from)?;
    write_file(&report_path, text + "\n")?;
    for path in [&dict_path, &spectrum_path, &loss_path, &report_path] {
        provenance(path, "train", &cfg, &inputs)?;
    }
    if model.report.null_pairs > 0 {
        eprintln!("{} eigenpairs have numerically null eigenfunctions; residual left empty", model.report.null_pairs);
    }
    println!(
        "J {} -> {} after {} epochs ({})",
        fmt_f64(model.report.initial_j),
        fmt_f64(model.report.final_j),
        model.report.epochs_run,
        if model.report.converged { "converged" } else { "max epochs" }
    );
    Ok(())
}

// ---- EDMD-based commands ----

struct Analysis {
    spectrum: Spectrum,
    psi_x: Mat<f64>,
    sigma: f64,
}

fn analyse(dict: &dyn Dictionary, data: &SnapshotPairs, sigma: Option<f64>) -> Result<Analysis, CliError> {
    let psi_x = dict.evaluate_batch(data.x())?;
    let psi_y = dict.evaluate_batch(data.y())?;
    let gram = koopman_core::gram::compute_gram(psi_x.as_ref(), psi_y.as_ref())?;
    let sigma = sigma.unwrap_or_else(|| default_sigma(&gram));
    let k = solve_koopman(&gram, sigma)?;
    let (spectrum, null_pairs) = residuals_where_defined(&eig(&k, &gram)?, &gram)?;
    if null_pairs > 0 {
        eprintln!("{null_pairs} eigenpairs have numerically null eigenfunctions; residual left empty");
    }
    Ok(Analysis {
        spectrum,
        psi_x,
        sigma,
    })
}

/// Keeps pairs with a residual at most `epsilon`; pairs without a residual
/// are dropped.
fn filter(spectrum: Spectrum, epsilon: Option<f64>) -> Spectrum {
    match epsilon {
        None => spectrum,
        Some(eps) => Spectrum {
            pairs: spectrum
                .pairs
                .into_iter()
                .filter(|p| p.residual.is_some_and(|r| r <= eps))
                .collect(),
            n_k: spectrum.n_k,
        },
    }
}

pub fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let mut cfg: SpectrumConfig = config::load(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    set(&mut cfg.dictionary, a.dictionary);
    if a.sigma.is_some() {
        cfg.sigma = a.sigma;
    }
    if a.epsilon.is_some() {
        cfg.epsilon = a.epsilon;
    }
    cfg.validate()?;
    let data_path = cfg.data.clone().unwrap_or_default();
    let data = io::read_snapshots(&data_path).map_err(at(&data_path))?;
    let dict = cfg.dictionary.build(&data)?;
    let analysis = analyse(dict.as_ref(), &data, cfg.sigma)?;
    let total = analysis.spectrum.len();
    let kept = filter(analysis.spectrum, cfg.epsilon);
    let comments = vec![
        format!("n_k={}", kept.n_k),
        format!("sigma={}", fmt_f64(analysis.sigma)),
        format!("kept={} of {total}", kept.len()),
    ];
    io::write_spectrum(&a.out, &kept, &comments).map_err(at(&a.out))?;
    let inputs = config_inputs(&a.config, std::iter::once(data_path).chain(cfg.dictionary.input_paths()));
    provenance(&a.out, "spectrum", &cfg, &inputs)?;
    println!("{} of {total} eigenpairs written", kept.len());
    Ok(())
}

pub fn pseudospec(a: PseudospecArgs) -> Result<(), CliError> {
    let mut cfg: PseudospecConfig = config::load(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    set(&mut cfg.dictionary, a.dictionary);
    if a.sigma.is_some() {
        cfg.sigma = a.sigma;
    }
    set(&mut cfg.epsilon, a.epsilon);
    if let Some([r0, r1, i0, i1]) = a.bounds {
        cfg.grid.re = [r0, r1];
        cfg.grid.im = [i0, i1];
    }
    if let Some([n_re, n_im]) = a.resolution {
        cfg.grid.n_re = n_re;
        cfg.grid.n_im = n_im;
    }
    cfg.validate()?;
    let data_path = cfg.data.clone().unwrap_or_default();
    let data = io::read_snapshots(&data_path).map_err(at(&data_path))?;
    let dict = cfg.dictionary.build(&data)?;
    let psi_x = dict.evaluate_batch(data.x())?;
    let psi_y = dict.evaluate_batch(data.y())?;
    let gram = koopman_core::gram::compute_gram(psi_x.as_ref(), psi_y.as_ref())?;
    let sigma = cfg.sigma.unwrap_or_else(|| default_sigma(&gram));
    let GridSpec { re, im, n_re, n_im } = cfg.grid;
    let points = rectangular_grid((re[0], re[1]), (im[0], im[1]), n_re, n_im);
    let grid = pseudospectrum(&gram, &points, cfg.epsilon, sigma)?;
    io::write_pseudospectrum(&a.out, &grid).map_err(at(&a.out))?;
    let inputs = config_inputs(&a.config, std::iter::once(data_path).chain(cfg.dictionary.input_paths()));
    provenance(&a.out, "pseudospec", &cfg, &inputs)?;
    println!("{} of {} grid points accepted", grid.accepted_points().len(), grid.len());
    Ok(())
}

pub fn modes(a: ModesArgs) -> Result<(), CliError> {
    let mut cfg: ModesConfig = config::load(a.config.as_deref())?;
    if a.data.is_some() {
        cfg.data = a.data;
    }
    set(&mut cfg.dictionary, a.dictionary);
    if a.sigma.is_some() {
        cfg.sigma = a.sigma;
    }
    if a.epsilon.is_some() {
        cfg.epsilon = a.epsilon;
    }
    if a.svd_rank.is_some() {
        cfg.svd_rank = a.svd_rank;
    }
    cfg.validate()?;
    let data_path = cfg.data.clone().unwrap_or_default();
    let full = io::read_snapshots(&data_path).map_err(at(&data_path))?;
    let reducer = cfg.svd_rank.map(|r| fit_truncated_svd(full.x(), r)).transpose()?;
    let data = match &reducer {
        Some(red) => SnapshotPairs::new(red.project(full.x())?, red.project(full.y())?)?,
        None => full,
    };
    let dict = cfg.dictionary.build(&data)?;
    let analysis = analyse(dict.as_ref(), &data, cfg.sigma)?;
    let kept = filter(analysis.spectrum, cfg.epsilon);
    let decomposition = koopman_modes(&kept, analysis.psi_x.as_ref(), data.x())?;
    let modes = match &reducer {
        Some(red) => red.lift_modes(decomposition.modes.as_ref())?,
        None => decomposition.modes,
    };
    io::write_modes(&a.out, modes.as_ref()).map_err(at(&a.out))?;
    let inputs = config_inputs(&a.config, std::iter::once(data_path).chain(cfg.dictionary.input_paths()));
    provenance(&a.out, "modes", &cfg, &inputs)?;
    if let Some(path) = &a.spectrum_out {
        let comments = vec![format!("sigma={}", fmt_f64(analysis.sigma))];
        io::write_spectrum(path, &kept, &comments).map_err(at(path))?;
        provenance(path, "modes", &cfg, &inputs)?;
    }
    if decomposition.rank_deficient {
        eprintln!("eigenfunction samples are numerically rank deficient");
    }
    println!(
        "{} modes of dimension {}, relative fit error {}",
        modes.nrows(),
        modes.ncols(),
        fmt_f64(decomposition.relative_error)
    );
    Ok(())
}

// ---- hankel ----

/// State columns of a series table, optionally restricted to one trial.
fn series_matrix(table: &io::Table, trial: Option<i64>, path: &Path) -> Result<Mat<f64>, CliError> {
    let header = table.header.clone().unwrap_or_default();
    let state_cols: Vec<usize> = (0..table.data.ncols())
        .filter(|&j| header.get(j).is_none_or(|h| !SERIES_META.contains(&h.as_str())))
        .collect();
    let rows: Vec<usize> = match trial {
        None => (0..table.data.nrows()).collect(),
        Some(t) => {
            let col = table.column_index("trial").ok_or_else(|| {
                CliError::Config(format!("{}: no `trial` column to select from", path.display()))
            })?;
            (0..table.data.nrows()).filter(|&i| table.data[(i, col)] == t as f64).collect()
        }
    };
    if rows.is_empty() || state_cols.is_empty() {
        return Err(CliError::Config(format!("{}: selection is empty", path.display())));
    }
    Ok(Mat::from_fn(rows.len(), state_cols.len(), |i, j| table.data[(rows[i], state_cols[j])]))
}

pub fn hankel(a: HankelArgs) -> Result<(), CliError> {
    let mut cfg: HankelConfig = config::load(a.config.as_deref())?;
    if a.series.is_some() {
        cfg.series = a.series;
    }
    set(&mut cfg.delay, a.delay);
    set(&mut cfg.rank, a.rank);
    if a.trial.is_some() {
        cfg.trial = a.trial;
    }
    cfg.validate()?;
    let path = cfg.series.clone().unwrap_or_default();
    let table = io::read_table(&path).map_err(at(&path))?;
    let series = series_matrix(&table, cfg.trial, &path)?;
    let h = build_hankel_from_rows(series.as_ref(), cfg.delay)?;
    let rank = match cfg.rank {
        RankSpec::Full => DmdRank::Full,
        RankSpec::Fixed(r) => DmdRank::Fixed(r),
    };
    let spectrum = hankel_dmd(&h, rank)?;
    let comments = vec![format!("delay={}", cfg.delay), format!("hankel={}x{}", h.nrows(), h.ncols())];
    io::write_spectrum(&a.out, &spectrum, &comments).map_err(at(&a.out))?;
    provenance(&a.out, "hankel", &cfg, &config_inputs(&a.config, [path]))?;
    println!("{} eigenvalues from a {}x{} Hankel matrix", spectrum.len(), h.nrows(), h.ncols());
    Ok(())
}

// ---- dbi ----

pub fn dbi(a: DbiArgs) -> Result<(), CliError> {
    let mut cfg: DbiConfig = config::load(a.config.as_deref())?;
    if a.features.is_some() {
        cfg.features = a.features;
    }
    set(&mut cfg.label_column, a.label_column);
    set(&mut cfg.exclude, a.exclude);
    cfg.validate()?;
    let path = cfg.features.clone().unwrap_or_default();
    let table = io::read_table(&path).map_err(at(&path))?;
    let label_col = table.column_index(&cfg.label_column).ok_or_else(|| {
        CliError::Config(format!("{}: no `{}` column in the header", path.display(), cfg.label_column))
    })?;
    let header = table.header.clone().unwrap_or_default();
    let cols: Vec<usize> = (0..table.data.ncols())
        .filter(|&j| j != label_col && !cfg.exclude.contains(&header[j]))
        .collect();
    if cols.is_empty() {
        return Err(CliError::Config("no feature columns left".into()));
    }
    let mut labels = Vec::with_capacity(table.data.nrows());
    for i in 0..table.data.nrows() {
        let v = table.data[(i, label_col)];
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(KoopmanError::Format {
                path: path.display().to_string(),
                line: i + 2,
                message: format!("label {v} is not an integer"),
            }
            .into());
        }
        labels.push(v as i64);
    }
    let features = Mat::from_fn(table.data.nrows(), cols.len(), |i, j| table.data[(i, cols[j])]);
    let value = davies_bouldin(features.as_ref(), &labels)?;
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&serde_json::json!({ "dbi": value })).map_err(KoopmanError::from)?;
        write_file(out, text + "\n")?;
        provenance(out, "dbi", &cfg, &config_inputs(&a.config, [path]))?;
    }
    println!("{}", fmt_f64(value));
    Ok(())
}

// ---- plot ----

pub fn plot(a: PlotArgs) -> Result<(), CliError> {
    let mut cfg: PlotConfig = config::load(a.config.as_deref())?;
    if a.spectrum.is_some() {
        cfg.spectrum = a.spectrum;
    }
    if a.pseudospectrum.is_some() {
        cfg.pseudospectrum = a.pseudospectrum;
    }
    set(&mut cfg.size, a.size);
    if a.title.is_some() {
        cfg.title = a.title;
    }
    cfg.validate()?;
    let spectrum = match cfg.spectrum.as_deref() {
        Some(p) => io::read_spectrum(p).map_err(at(p))?,
        None => Vec::new(),
    };
    let pseudo = match cfg.pseudospectrum.as_deref() {
        Some(p) => io::read_pseudospectrum(p).map_err(at(p))?,
        None => Vec::new(),
    };
    let svg = plot::render(&spectrum, &pseudo, cfg.size, cfg.title.as_deref());
    write_file(&a.out, svg)?;
    let inputs = config_inputs(&a.config, cfg.spectrum.iter().chain(&cfg.pseudospectrum).cloned());
    provenance(&a.out, "plot", &cfg, &inputs)?;
    println!("{} eigenvalues, {} grid cells", spectrum.len(), pseudo.len());
    Ok(())
}
