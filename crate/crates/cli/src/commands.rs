use std::path::Path;

use pvann_core::ann::{
    architecture_search, export_c_source, export_portable, import_portable, validate, Candidate,
    RankRule, TrainConfig, TrainSample, PRECISION_THRESHOLD,
};
use pvann_core::dataset::{self, DatasetRecord, GridSpec, Axis, NormalizationParams, Split};
use pvann_core::fmt::{exact, sig};
use pvann_core::mppt::{compare, simulate_day, AnnController, Controller, DayProfile, RunReport};
use pvann_core::panel::PanelSpec;
use pvann_core::solar::{
    self, calibrate_sensor, clear_sky_profile, extraterrestrial_irradiance, solar_noon,
    AirMassModel, ClearSkyOptions, DirectModel, IrradianceSample, SiteConfig, SolarConstants,
};

use crate::config::{Resolved, RunDir, Schema};
use crate::error::{CliError, UsageContext};

pub struct Ctx<'a> {
    pub cfg: &'a Resolved,
    pub run: RunDir,
    pub quiet: bool,
}

impl Ctx<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub const IRRADIANCE: Schema = &[
    ("latitude", "-26.2348783"),
    ("longitude", "-48.886931"),
    ("timezone", "-3"),
    ("day_of_year", "91"),
    ("sun_surface_irradiance", "62300000"),
    ("sun_radius", "695000000"),
    ("earth_sun_distance", "149500000000"),
    ("atmospheric_loss_fraction", "0.3"),
    ("air_mass_model", "secant"),
    ("direct_model", "flat_transmission"),
    ("start_h", "6"),
    ("end_h", "16"),
    ("step_min", "5"),
    ("seed", "1"),
];

pub const CALIBRATE: Schema = &[
    ("sensor", ""),
    ("window_start_h", ""),
    ("window_end_h", ""),
    ("latitude", "-26.2348783"),
    ("longitude", "-48.886931"),
    ("timezone", "-3"),
    ("day_of_year", "91"),
    ("sun_surface_irradiance", "62300000"),
    ("sun_radius", "695000000"),
    ("earth_sun_distance", "149500000000"),
    ("atmospheric_loss_fraction", "0.3"),
    ("air_mass_model", "secant"),
    ("direct_model", "flat_transmission"),
    ("start_h", "6"),
    ("end_h", "16"),
    ("step_min", "5"),
    ("seed", "1"),
];

pub const DATASET: Schema = &[
    ("panel", ""),
    ("g_min", "100"),
    ("g_max", "1000"),
    ("g_step", "10"),
    ("t_min", "5.11"),
    ("t_max", "60.93"),
    ("t_step", "0.5"),
    ("loads", "1,3,5,7,9,11,13,15,17,19"),
    ("train_fraction", "0.7"),
    ("bins", "50"),
    ("seed", "1"),
];

pub const TRAIN: Schema = &[
    ("dataset", ""),
    (
        "candidates",
        "3-6-3-1:tanh,3-6-3-1:sigmoid,3-6-3-1:softsign,3-6-3-1:relu,3-6-3-1:linear:linear",
    ),
    ("rank_rule", "validation_mse"),
    ("learning_rate", "0.01"),
    ("epochs", "14"),
    ("shuffle_each_epoch", "true"),
    ("seed", "1"),
];

pub const EVAL: Schema = &[
    ("weights", ""),
    ("dataset", ""),
    ("split", "validation"),
    ("seed", "1"),
];

pub const SIMULATE: Schema = &[
    ("controllers", "po,ann"),
    ("weights", ""),
    ("profile", ""),
    ("panel", ""),
    ("load_ohm", "10"),
    ("ambient_c", "25"),
    ("control_period_s", "0.1"),
    ("po_step", "0.005"),
    ("po_initial_duty", "0.5"),
    ("output_stride", "10"),
    ("latitude", "-26.2348783"),
    ("longitude", "-48.886931"),
    ("timezone", "-3"),
    ("day_of_year", "91"),
    ("sun_surface_irradiance", "62300000"),
    ("sun_radius", "695000000"),
    ("earth_sun_distance", "149500000000"),
    ("atmospheric_loss_fraction", "0.3"),
    ("air_mass_model", "secant"),
    ("direct_model", "flat_transmission"),
    ("start_h", "6"),
    ("end_h", "18"),
    ("step_min", "5"),
    ("seed", "1"),
];

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> pvann_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn histogram_bytes(h: &pvann_core::stats::Histogram) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    h.write_csv(&mut buf)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

fn clear_sky(cfg: &Resolved) -> Result<Vec<IrradianceSample>, CliError> {
    let site = SiteConfig::new(
        cfg.get("latitude")?,
        cfg.get("longitude")?,
        cfg.get("timezone")?,
        cfg.get("day_of_year")?,
    )
    .usage()?;
    let constants = SolarConstants::new(
        cfg.get("sun_surface_irradiance")?,
        cfg.get("sun_radius")?,
        cfg.get("earth_sun_distance")?,
        cfg.get("atmospheric_loss_fraction")?,
    )
    .usage()?;
    let options = ClearSkyOptions {
        air_mass: cfg.raw("air_mass_model").parse::<AirMassModel>().usage()?,
        direct: cfg.raw("direct_model").parse::<DirectModel>().usage()?,
    };
    let step_min: f64 = cfg.get("step_min")?;
    clear_sky_profile(
        &site,
        &constants,
        options,
        cfg.get("start_h")?,
        cfg.get("end_h")?,
        step_min / 60.0,
    )
    .usage()
}

fn panel(ctx: &mut Ctx<'_>) -> Result<PanelSpec, CliError> {
    match ctx.cfg.path("panel") {
        None => Ok(PanelSpec::yl150p_17b()),
        Some(p) => {
            let text = ctx.run.read_input_text("panel", &p)?;
            PanelSpec::from_kv(&text).usage()
        }
    }
}

pub fn irradiance(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let profile = clear_sky(cfg)?;
    let site = SiteConfig::new(
        cfg.get("latitude")?,
        cfg.get("longitude")?,
        cfg.get("timezone")?,
        cfg.get("day_of_year")?,
    )
    .usage()?;
    let constants = SolarConstants::new(
        cfg.get("sun_surface_irradiance")?,
        cfg.get("sun_radius")?,
        cfg.get("earth_sun_distance")?,
        cfg.get("atmospheric_loss_fraction")?,
    )
    .usage()?;
    ctx.run.write(
        "irradiance.csv",
        &csv_bytes(|b| solar::write_profile_csv(&profile, b))?,
    )?;
    let peak = profile
        .iter()
        .fold(profile[0], |best, s| if s.irradiance > best.irradiance { *s } else { best });
    let summary = format!(
        "samples = {}\nextraterrestrial_wm2 = {}\nsolar_noon_h = {}\npeak_time_h = {}\npeak_irradiance_wm2 = {}\n",
        profile.len(),
        sig(extraterrestrial_irradiance(&constants), 9),
        sig(solar_noon(&site), 9),
        sig(peak.time_h, 9),
        sig(peak.irradiance, 9)
    );
    ctx.run.write("summary.txt", summary.as_bytes())?;
    ctx.log(format!(
        "{} samples, peak {} W/m2 at {} h",
        profile.len(),
        sig(peak.irradiance, 5),
        sig(peak.time_h, 5)
    ));
    Ok(())
}

pub fn calibrate(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let sensor_path = cfg.required_path("sensor")?;
    let bytes = ctx.run.read_input("sensor", &sensor_path)?;
    let samples = solar::read_sensor_csv(bytes.as_slice()).usage()?;
    let reference = clear_sky(cfg)?;
    let lo = match cfg.raw("window_start_h") {
        "" => cfg.get("start_h")?,
        _ => cfg.get("window_start_h")?,
    };
    let hi = match cfg.raw("window_end_h") {
        "" => cfg.get("end_h")?,
        _ => cfg.get("window_end_h")?,
    };
    let cal = calibrate_sensor(&samples, &reference, (lo, hi))?;
    let text = format!(
        "gain_wm2_per_volt = {}\noffset_wm2 = {}\nfit_residual_rms_wm2 = {}\npairs = {}\nwindow_start_h = {}\nwindow_end_h = {}\n",
        exact(cal.gain),
        exact(cal.offset),
        sig(cal.fit_residual_rms, 9),
        cal.pairs,
        lo,
        hi
    );
    ctx.run.write("calibration.txt", text.as_bytes())?;
    let mut csv = String::from("time_h,volts,irradiance_wm2\n");
    for s in &samples {
        csv += &format!(
            "{},{},{}\n",
            sig(s.time_h, 9),
            sig(s.volts, 9),
            sig(cal.irradiance(s.volts), 9)
        );
    }
    ctx.run.write("calibrated.csv", csv.as_bytes())?;
    ctx.run.write(
        "reference.csv",
        &csv_bytes(|b| solar::write_profile_csv(&reference, b))?,
    )?;
    ctx.log(format!(
        "gain {} W/m2/V, offset {} W/m2 from {} pairs",
        sig(cal.gain, 6),
        sig(cal.offset, 6),
        cal.pairs
    ));
    Ok(())
}

pub fn dataset(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let spec = panel(ctx)?;
    let cfg = ctx.cfg;
    let grid = GridSpec {
        irradiance: Axis::new(cfg.get("g_min")?, cfg.get("g_max")?, cfg.get("g_step")?).usage()?,
        temperature: Axis::new(cfg.get("t_min")?, cfg.get("t_max")?, cfg.get("t_step")?).usage()?,
        loads: cfg.list("loads")?,
    };
    grid.validate().usage()?;
    let seed: u64 = cfg.get("seed")?;
    let fraction: f64 = cfg.get("train_fraction")?;
    let bins: usize = cfg.get("bins")?;
    if bins == 0 {
        return Err(CliError::Usage("`bins` must be at least 1".into()));
    }
    ctx.log(format!("generating {} records", grid.len()));
    let records = dataset::generate(&spec, &grid)?;
    let split = dataset::split(records.len(), fraction, seed).usage()?;
    let train = Split::select(&split.train, &records);
    let norm = NormalizationParams::fit(&train)?;
    let summary = dataset::summarize(&records, bins)?;

    ctx.run.write("dataset.csv", &csv_bytes(|b| dataset::write_csv(&records, b))?)?;
    ctx.run.write("train_index.txt", &csv_bytes(|b| dataset::write_indices(&split.train, b))?)?;
    ctx.run.write(
        "validation_index.txt",
        &csv_bytes(|b| dataset::write_indices(&split.validation, b))?,
    )?;
    ctx.run.write("normalization.txt", norm.to_kv().as_bytes())?;
    ctx.run.write("hist_irradiance.csv", &histogram_bytes(&summary.irradiance)?)?;
    ctx.run.write("hist_temperature.csv", &histogram_bytes(&summary.temperature)?)?;
    ctx.run.write("hist_duty.csv", &histogram_bytes(&summary.duty)?)?;
    ctx.run.write(
        "correlation.csv",
        &csv_bytes(|b| dataset::write_correlation_csv(&summary.correlation, b))?,
    )?;

    let (mlo, mhi) = summary.duty.bin_range(summary.duty.modal_bin());
    let span = grid.irradiance.max - grid.irradiance.min;
    let low = (grid.irradiance.min, grid.irradiance.min + 0.1 * span);
    let high = (grid.irradiance.max - 0.1 * span, grid.irradiance.max);
    let spread = |b: (f64, f64)| {
        dataset::duty_spread(&records, b.0, b.1)
            .map(|s| sig(s, 9))
            .unwrap_or_else(|| "none".into())
    };
    let text = format!(
        "records = {}\ntrain = {}\nvalidation = {}\nmodal_duty_bin_lo = {}\nmodal_duty_bin_hi = {}\n\
         low_band_wm2 = {}..{}\nlow_band_duty_spread = {}\nhigh_band_wm2 = {}..{}\nhigh_band_duty_spread = {}\n",
        records.len(),
        split.train.len(),
        split.validation.len(),
        sig(mlo, 9),
        sig(mhi, 9),
        sig(low.0, 9),
        sig(low.1, 9),
        spread(low),
        sig(high.0, 9),
        sig(high.1, 9),
        spread(high)
    );
    ctx.run.write("summary.txt", text.as_bytes())?;
    ctx.log(format!(
        "{} records, modal duty bin [{}, {}]",
        records.len(),
        sig(mlo, 4),
        sig(mhi, 4)
    ));
    Ok(())
}

/// The dataset directory written by the dataset command.
struct DatasetDir {
    records: Vec<DatasetRecord>,
    train: Vec<usize>,
    validation: Vec<usize>,
    norm: NormalizationParams,
}

fn load_dataset_dir(ctx: &mut Ctx<'_>, dir: &Path, with_norm: bool) -> Result<DatasetDir, CliError> {
    let bytes = ctx.run.read_input("dataset_csv", &dir.join("dataset.csv"))?;
    let records = dataset::read_csv(bytes.as_slice()).usage()?;
    let text = ctx.run.read_input_text("train_index", &dir.join("train_index.txt"))?;
    let train = dataset::read_indices(&text, records.len()).usage()?;
    let text = ctx
        .run
        .read_input_text("validation_index", &dir.join("validation_index.txt"))?;
    let validation = dataset::read_indices(&text, records.len()).usage()?;
    let norm = if with_norm {
        let text = ctx.run.read_input_text("normalization", &dir.join("normalization.txt"))?;
        NormalizationParams::from_kv(&text).usage()?
    } else {
        NormalizationParams::fit(&records)?
    };
    Ok(DatasetDir {
        records,
        train,
        validation,
        norm,
    })
}

fn samples(norm: &NormalizationParams, idx: &[usize], records: &[DatasetRecord]) -> Vec<TrainSample> {
    idx.iter()
        .map(|&i| {
            let (x, y) = norm.normalize(&records[i]);
            TrainSample {
                input: x.to_vec(),
                desired: vec![y],
            }
        })
        .collect()
}

pub fn train(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let candidates = cfg
        .list::<String>("candidates")?
        .iter()
        .map(|c| Candidate::parse(c))
        .collect::<pvann_core::Result<Vec<_>>>()
        .usage()?;
    let rule: RankRule = cfg.raw("rank_rule").parse().usage()?;
    let config = TrainConfig {
        learning_rate: cfg.get("learning_rate")?,
        epochs: cfg.get("epochs")?,
        seed: cfg.get("seed")?,
        shuffle_each_epoch: cfg.get("shuffle_each_epoch")?,
    }
    .validate()
    .usage()?;
    let dir = cfg.required_path("dataset")?;
    let data = load_dataset_dir(ctx, &dir, true)?;
    let train_set = samples(&data.norm, &data.train, &data.records);
    let val_set = samples(&data.norm, &data.validation, &data.records);
    ctx.log(format!(
        "training {} candidate(s) on {} samples, validating on {}",
        candidates.len(),
        train_set.len(),
        val_set.len()
    ));
    let outcome = architecture_search(&train_set, &val_set, &candidates, &config, rule)?;

    let mut ranking = String::from(
        "rank,candidate_index,candidate,param_count,train_mse,validation_mse,validation_mse_percent,fraction_within,failure\n",
    );
    for (rank, r) in outcome.ranked.iter().enumerate() {
        ranking += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            r.index,
            r.candidate.label(),
            r.param_count,
            sig(r.train_mse, 9),
            sig(r.validation_mse, 9),
            sig(r.validation_mse * 100.0, 9),
            sig(r.fraction_within, 9),
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    ctx.run.write("ranking.csv", ranking.as_bytes())?;

    let mut by_index = outcome.ranked.clone();
    by_index.sort_by_key(|r| r.index);
    let mut history = String::from("epoch");
    for r in &by_index {
        history += &format!(",c{}_{}", r.index, r.candidate.label());
    }
    history += "\n";
    for epoch in 0..config.epochs {
        history += &(epoch + 1).to_string();
        for r in &by_index {
            history += ",";
            if let Some(v) = r.history.get(epoch) {
                history += &sig(*v, 9);
            }
        }
        history += "\n";
    }
    ctx.run.write("mse_history.csv", history.as_bytes())?;

    ctx.run.write(
        "best_weights.mlpw",
        export_portable(&outcome.best, &data.norm)?.as_bytes(),
    )?;
    ctx.run.write(
        "best_weights.c",
        export_c_source(&outcome.best, &data.norm)?.as_bytes(),
    )?;
    let best = &outcome.ranked[0];
    let summary = format!(
        "best_candidate = {}\nbest_validation_mse_percent = {}\nbest_fraction_within = {}\nrank_rule = {}\n\
         learning_rate = {}\nepochs = {}\nseed = {}\nmse_definition = mean of 0.5 e^2 on the normalized scale, percent = x100\n",
        best.candidate.label(),
        sig(best.validation_mse * 100.0, 9),
        sig(best.fraction_within, 9),
        rule.name(),
        config.learning_rate,
        config.epochs,
        config.seed
    );
    ctx.run.write("train_summary.txt", summary.as_bytes())?;
    ctx.log(format!(
        "best {} with validation MSE {} %",
        best.candidate.label(),
        sig(best.validation_mse * 100.0, 4)
    ));
    Ok(())
}

pub fn eval(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let split = cfg.raw("split").to_string();
    let weights = cfg.required_path("weights")?;
    let text = ctx.run.read_input_text("weights", &weights)?;
    let (net, norm) = import_portable(&text).usage()?;
    let dir = cfg.required_path("dataset")?;
    let data = load_dataset_dir(ctx, &dir, false)?;
    let idx: Vec<usize> = match split.as_str() {
        "validation" => data.validation.clone(),
        "train" => data.train.clone(),
        "all" => (0..data.records.len()).collect(),
        other => {
            return Err(CliError::Usage(format!(
                "invalid value `{other}` for key `split` (train, validation or all)"
            )))
        }
    };
    let set = samples(&norm, &idx, &data.records);
    let report = validate(&net, &set)?;
    let duty_within = report
        .pairs
        .iter()
        .filter(|(p, d)| (norm.denormalize_target(*p) - norm.denormalize_target(*d)).abs() < PRECISION_THRESHOLD)
        .count();
    let text = format!(
        "split = {split}\nsamples = {}\nmse = {}\nmse_percent = {}\nthreshold = {}\nwithin_threshold = {}\n\
         fraction_within = {}\nwithin_threshold_duty_units = {}\nfraction_within_duty_units = {}\n\
         mse_definition = mean of 0.5 e^2 on the normalized scale, percent = x100\n",
        set.len(),
        sig(report.mse, 9),
        sig(report.mse_percent, 9),
        PRECISION_THRESHOLD,
        report.within_threshold,
        sig(report.fraction_within(), 9),
        duty_within,
        sig(duty_within as f64 / set.len() as f64, 9)
    );
    ctx.run.write("mse_report.txt", text.as_bytes())?;
    let mut diag = String::from("predicted,desired\n");
    for (p, d) in &report.pairs {
        diag += &format!("{},{}\n", sig(*p, 9), sig(*d, 9));
    }
    ctx.run.write("diagonal.csv", diag.as_bytes())?;
    ctx.run.write("error_hist.csv", &histogram_bytes(&report.error_histogram)?)?;
    ctx.log(format!(
        "MSE {} %, {} of {} errors under {}",
        sig(report.mse_percent, 4),
        report.within_threshold,
        set.len(),
        PRECISION_THRESHOLD
    ));
    Ok(())
}

pub fn simulate(ctx: &mut Ctx<'_>) -> Result<(), CliError> {
    let spec = panel(ctx)?;
    let cfg = ctx.cfg;
    let names: Vec<String> = cfg.list("controllers")?;
    if names.is_empty() || names.len() > 2 {
        return Err(CliError::Usage("`controllers` takes one or two of po, ann".into()));
    }
    if names.len() == 2 && names[0] == names[1] {
        return Err(CliError::Usage("`controllers` lists the same controller twice".into()));
    }
    let load: f64 = cfg.get("load_ohm")?;
    let period: f64 = cfg.get("control_period_s")?;
    let stride: usize = cfg.get("output_stride")?;
    let po_step: f64 = cfg.get("po_step")?;
    let po_initial: f64 = cfg.get("po_initial_duty")?;

    let ann = if names.iter().any(|n| n == "ann") {
        let path = cfg
            .path("weights")
            .ok_or_else(|| CliError::Usage("the ann controller needs `weights`".into()))?;
        let text = ctx.run.read_input_text("weights", &path)?;
        let (net, norm) = import_portable(&text).usage()?;
        Some(AnnController::new(net, norm).usage()?)
    } else {
        None
    };
    let profile = match cfg.path("profile") {
        Some(p) => {
            let bytes = ctx.run.read_input("profile", &p)?;
            DayProfile::read_csv(bytes.as_slice(), load).usage()?
        }
        None => DayProfile::from_irradiance(&clear_sky(cfg)?, cfg.get("ambient_c")?, load).usage()?,
    };
    let mut controllers = Vec::new();
    for n in &names {
        controllers.push(match n.as_str() {
            "po" => Controller::PerturbObserve {
                initial_duty: po_initial,
                step: po_step,
            },
            "ann" => Controller::Ann(ann.as_ref().expect("loaded above")),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown controller `{other}` (po or ann)"
                )))
            }
        });
    }
    // Validate the P&O settings up front so they surface as usage errors.
    pvann_core::mppt::PoState::new(po_initial, po_step).usage()?;
    if !(period > 0.0) {
        return Err(CliError::Usage(format!("invalid value `{period}` for key `control_period_s`")));
    }

    ctx.log(format!("simulating {} controller(s)", controllers.len()));
    let reports: Vec<RunReport> = std::thread::scope(|s| {
        let handles: Vec<_> = controllers
            .iter()
            .map(|c| {
                let (profile, spec) = (&profile, &spec);
                s.spawn(move || simulate_day(profile, spec, c, period))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect::<pvann_core::Result<Vec<_>>>()
    })?;

    ctx.run.write("profile.csv", &csv_bytes(|b| profile.write_csv(b))?)?;
    for r in &reports {
        ctx.run.write(
            &format!("run_{}.csv", r.controller),
            &csv_bytes(|b| r.write_csv(b, stride))?,
        )?;
        ctx.run
            .write(&format!("metrics_{}.txt", r.controller), r.metrics_kv().as_bytes())?;
        ctx.log(format!(
            "{}: tracking efficiency {}, duty stddev {}",
            r.controller,
            sig(r.metrics.tracking_efficiency, 6),
            sig(r.metrics.duty_stddev, 4)
        ));
    }
    if let [a, b] = &reports[..] {
        let cmp = compare(a, b)?;
        ctx.run.write("comparison.txt", cmp.to_kv().as_bytes())?;
        ctx.run.write(
            "comparison.csv",
            &csv_bytes(|w| cmp.write_differences_csv(w, stride))?,
        )?;
    }
    Ok(())
}
