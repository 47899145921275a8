//! Subcommand execution. Each command yields a JSON value and a CSV table.

use std::fs;

use itq_core::cre::{self, original_family, pooled_family, simultaneous_cis, Inverter, NullPair};
use itq_core::model::{ExperimentData, FamilyEntry, IntervalFamily, LoadOptions, MonteCarloConfig, RankTransform};
use itq_core::population::{population_band, population_cis, PopulationKind, PopulationTarget, SampleScope};
use itq_core::rank::{NullMode, NullOptions};
use itq_core::sim::{self, coverage_audit, CoverageReport, DgpSpec, Procedure, StudyConfig};
use itq_core::stratified::{
    intervals_scre, pvalue_scre, sensitivity_curve, SensitivityMode, SensitivityOptions,
};
use itq_core::tail::{level_index, CorrectionSpec};
use itq_core::load_experiment;
use itq_core::model::extended_real;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// What a command produced.
pub struct Output {
    pub json: String,
    pub csv: String,
    /// Path and bytes of the input data, when a command reads one.
    pub input: Option<(String, Vec<u8>)>,
}

struct Loaded {
    data: ExperimentData,
    transform: RankTransform,
    bytes: Vec<u8>,
    path: String,
}

fn mc(cli: &Cli) -> CliResult<MonteCarloConfig> {
    Ok(MonteCarloConfig::new(cli.mc_draws, cli.seed)?)
}

fn null_options(cli: &Cli, choice: NullChoice) -> CliResult<NullOptions> {
    let mode = match choice {
        NullChoice::Auto => NullMode::Auto,
        NullChoice::Exact => NullMode::Exact,
        NullChoice::Mc => NullMode::MonteCarlo,
    };
    Ok(NullOptions {
        mode,
        mc: mc(cli)?,
        ..Default::default()
    })
}

fn load(args: &DataArgs) -> CliResult<Loaded> {
    let bytes = fs::read(&args.data).map_err(|e| CliError::Input(format!("{}: {e}", args.data.display())))?;
    let data = load_experiment(
        &bytes,
        &LoadOptions {
            shuffle_seed: args.shuffle_seed,
        },
    )?;
    let transform = match args.statistic {
        Statistic::Wilcoxon => RankTransform::Wilcoxon,
        Statistic::Stephenson => RankTransform::Stephenson { s: args.s },
    };
    Ok(Loaded {
        data,
        transform,
        bytes,
        path: args.data.display().to_string(),
    })
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    result: T,
}

fn envelope(command: &str, result: impl Serialize) -> CliResult<String> {
    let value = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        result,
    };
    serde_json::to_string_pretty(&value).map_err(|e| CliError::Internal(e.to_string()))
}

fn ranks_of(levels: &[f64], n: usize) -> CliResult<Vec<usize>> {
    if levels.is_empty() {
        return Err(CliError::Flag("no quantile levels given".into()));
    }
    if let Some(q) = levels.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
        return Err(CliError::Flag(format!("quantile level {q} outside (0, 1]")));
    }
    let mut ks: Vec<usize> = levels.iter().map(|&q| level_index(n as u64, q) as usize).collect();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

fn select(family: IntervalFamily, ks: &[usize]) -> IntervalFamily {
    let entries: Vec<FamilyEntry> = family
        .entries
        .into_iter()
        .filter(|e| e.index.rank().is_some_and(|k| ks.contains(&k)))
        .collect();
    IntervalFamily { entries, ..family }
}

fn quantile_ci(cli: &Cli, args: &QuantileCiArgs) -> CliResult<Output> {
    let l = load(&args.data)?;
    let data = &l.data;
    let n = data.n();
    let trs = std::slice::from_ref(&l.transform);
    let ks: Option<Vec<usize>> = args.quantiles.as_deref().map(|q| ranks_of(q, n)).transpose()?;
    let opts = null_options(cli, args.data.null)?;
    let family = match args.method {
        Method::M0 => {
            let nulls = NullPair::for_data(data, trs, &opts)?;
            let inv = Inverter::stratified(data, trs, &nulls.treated)?;
            let ks = ks.unwrap_or_else(|| (1..=n).collect());
            original_family(&inv, &ks, args.alpha)
        }
        Method::M1 => {
            let nulls = NullPair::for_data(data, trs, &opts)?;
            let family = if data.strata().is_some() {
                intervals_scre(data, trs, args.alpha, &nulls)?
            } else {
                if !(args.alpha > 0.0 && args.alpha < 0.5) {
                    return Err(CliError::Flag(format!("alpha = {} outside (0, 0.5)", args.alpha)));
                }
                let switched = data.switch_labels_negate();
                let t = Inverter::cre(data, &l.transform, &nulls.treated)?;
                let c = Inverter::cre(&switched, &l.transform, &nulls.control)?;
                pooled_family(&t, &c, args.alpha)
            };
            match ks {
                Some(ks) => select(family, &ks),
                None => family,
            }
        }
        Method::M2 => {
            if args.all {
                return Err(CliError::Flag("m2 needs --quantiles, not --all".into()));
            }
            let ks = ks.ok_or_else(|| CliError::Flag("m2 needs --quantiles".into()))?;
            if data.strata().is_some() {
                return Err(CliError::Flag("m2 supports completely randomized designs only".into()));
            }
            let nulls = NullPair::for_cre(data, &l.transform, &opts)?;
            simultaneous_cis(data, &l.transform, &ks, args.alpha, args.gamma, mc(cli)?, &nulls, args.sides == Sides::Both)?
                .family
        }
    };
    Ok(Output {
        json: envelope("quantile-ci", &family)?,
        csv: family.to_csv(),
        input: Some((l.path, l.bytes)),
    })
}

fn test(cli: &Cli, args: &TestArgs) -> CliResult<Output> {
    let l = load(&args.data)?;
    let data = &l.data;
    let k = if args.k == "n" {
        data.n()
    } else {
        args.k
            .parse::<usize>()
            .map_err(|_| CliError::Flag(format!("--k must be an integer or n, got {}", args.k)))?
    };
    let opts = null_options(cli, args.data.null)?;
    let trs = std::slice::from_ref(&l.transform);
    let result = if data.strata().is_some() {
        if args.k_prime.is_some() {
            return Err(CliError::Flag("--k-prime supports completely randomized designs only".into()));
        }
        let null = itq_core::null_distribution(&itq_core::Design::of(data), trs, &opts)?;
        let k_all = match args.scope {
            TestScope::All => k,
            TestScope::Treated => data.n_control() + k,
        };
        if args.scope == TestScope::Treated && k > data.n_treated() {
            return Err(CliError::Flag(format!("k = {k} exceeds n_t = {}", data.n_treated())));
        }
        pvalue_scre(data, trs, k_all, args.c, &null)?
    } else {
        let null = itq_core::null_distribution(&itq_core::Design::of(data), trs, &opts)?;
        match (args.scope, args.k_prime) {
            (TestScope::All, None) => cre::pvalue_all(data, &l.transform, k, args.c, &null)?,
            (TestScope::Treated, None) => cre::pvalue_treated(data, &l.transform, k, args.c, &null)?,
            (TestScope::All, Some(kp)) => cre::pvalue_berger(data, &l.transform, k, args.c, kp, &null)?,
            (TestScope::Treated, Some(_)) => {
                return Err(CliError::Flag("--k-prime applies to the all-units scope".into()))
            }
        }
    };
    let csv = format!(
        "k,c,scope,p_value\n{},{},{},{}\n",
        result.hypothesis.k,
        result.hypothesis.c,
        match args.scope {
            TestScope::All => "all",
            TestScope::Treated => "treated",
        },
        result.value
    );
    Ok(Output {
        json: envelope("test", &result)?,
        csv,
        input: Some((l.path, l.bytes)),
    })
}

fn sensitivity(cli: &Cli, args: &SensitivityArgs) -> CliResult<Output> {
    let l = load(&args.data)?;
    let options = SensitivityOptions {
        mode: match args.mode {
            SensitivityModeArg::Pairs => SensitivityMode::Pairs,
            SensitivityModeArg::Gaussian => SensitivityMode::GaussianApprox,
        },
        null: null_options(cli, args.data.null)?,
    };
    let curve = sensitivity_curve(
        &l.data,
        std::slice::from_ref(&l.transform),
        args.alpha,
        &args.gamma_grid,
        &options,
    )?;
    let mut csv = String::from("gamma,index,lower,closed\n");
    for (g, fam) in curve.gammas.iter().zip(&curve.families) {
        for e in &fam.entries {
            csv.push_str(&format!(
                "{g},{},{},{}\n",
                e.index,
                extended_real::format(e.interval.lower),
                e.interval.closed_at_lower
            ));
        }
    }
    Ok(Output {
        json: envelope("sensitivity", &curve)?,
        csv,
        input: Some((l.path, l.bytes)),
    })
}

#[derive(Serialize)]
struct BandResult<'a> {
    band: &'a IntervalFamily,
    spec: &'a CorrectionSpec,
    alpha_prime: f64,
}

#[derive(Serialize)]
struct CoverageResult<'a> {
    procedure: &'a Procedure,
    report: &'a CoverageReport,
}

fn population_ci(cli: &Cli, args: &PopulationArgs) -> CliResult<Output> {
    let l = load(&args.data)?;
    let kind = match args.population {
        Some(size) => PopulationKind::Finite { size },
        None => PopulationKind::Super,
    };
    let target = PopulationTarget::new(kind, args.betas.clone())?;
    let scope = match args.scope {
        PopulationScope::All => SampleScope::All,
        PopulationScope::Treated => SampleScope::Treated,
        PopulationScope::Control => SampleScope::Control,
    };
    let trs = std::slice::from_ref(&l.transform);
    let nulls = NullPair::for_data(&l.data, trs, &null_options(cli, args.data.null)?)?;
    let cis = population_cis(&l.data, trs, &target, args.alpha, args.split_gamma, scope, mc(cli)?, &nulls)?;
    let (json, csv) = if args.band {
        let band = population_band(&cis.family)?;
        let result = BandResult {
            band: &band,
            spec: &cis.spec,
            alpha_prime: cis.alpha_prime,
        };
        (envelope("population-ci", result)?, band.to_csv())
    } else {
        (envelope("population-ci", &cis)?, cis.family.to_csv())
    };
    Ok(Output {
        json,
        csv,
        input: Some((l.path, l.bytes)),
    })
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> CliResult<Output> {
    let mc = mc(cli)?;
    let transform = RankTransform::Stephenson { s: args.s };
    match args.study {
        Study::MethodComparison | Study::Gamma => {
            let config = StudyConfig {
                n: args.n,
                replications: args.replications,
                seed: cli.seed,
                alpha: args.alpha,
                transform,
                quantiles: args.quantiles.clone(),
                mc,
            };
            let rows = if args.study == Study::MethodComparison {
                sim::method_comparison(&config, &args.rho2)?
            } else {
                sim::gamma_study(&config, &args.rho2, &args.gammas)?
            };
            Ok(Output {
                json: envelope("simulate", &rows)?,
                csv: sim::tidy_csv(&rows),
                input: None,
            })
        }
        Study::Coverage => {
            let rho2 = *args
                .rho2
                .first()
                .ok_or_else(|| CliError::Flag("coverage needs one --rho2 value".into()))?;
            let spec = DgpSpec::new(args.n, rho2, args.replications, cli.seed)?;
            let ks = ranks_of(&args.quantiles, args.n)?;
            let procedure = match args.procedure {
                AuditProcedure::Pooled => Procedure::PooledAll,
                AuditProcedure::Single => Procedure::Single {
                    k: ks[0],
                    gamma: args.gamma,
                },
                AuditProcedure::Simultaneous => Procedure::Simultaneous {
                    ks,
                    gamma: args.gamma,
                    combine_sides: true,
                },
                AuditProcedure::Finite => Procedure::FinitePopulation {
                    size: args
                        .population
                        .ok_or_else(|| CliError::Flag("finite audit needs --population".into()))?,
                    betas: args.quantiles.clone(),
                    split_gamma: args.gamma,
                },
                AuditProcedure::Super => Procedure::Superpopulation {
                    betas: args.quantiles.clone(),
                    split_gamma: args.gamma,
                },
            };
            let report = coverage_audit(&spec, &procedure, &transform, args.alpha, mc)?;
            let mut csv = String::from("target,coverage\n");
            csv.push_str(&format!("simultaneous,{}\n", report.simultaneous));
            for (i, c) in report.per_target.iter().enumerate() {
                csv.push_str(&format!("{},{c}\n", i + 1));
            }
            Ok(Output {
                json: envelope(
                    "simulate",
                    CoverageResult {
                        procedure: &procedure,
                        report: &report,
                    },
                )?,
                csv,
                input: None,
            })
        }
    }
}

/// Runs any command except `replay`.
pub fn execute(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::QuantileCi(a) => quantile_ci(cli, a),
        Command::Test(a) => test(cli, a),
        Command::Sensitivity(a) => sensitivity(cli, a),
        Command::PopulationCi(a) => population_ci(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Replay(_) => Err(CliError::Internal("replay cannot be nested".into())),
    }
}
