mod commands;

use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use affgraph::trainer::ExperimentConfig;

fn format_arg() -> Arg {
    Arg::new("format")
        .long("format")
        .value_parser(["csv", "json"])
        .default_value("csv")
        .help("What to print on stdout")
}

/// `--config`, `--set k=v`, and one `--<key> VALUE` per config key.
fn with_config_flags(cmd: Command) -> Command {
    let cmd = cmd
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value config file; the task's defaults fill the rest"),
        )
        .arg(
            Arg::new("set")
                .long("set")
                .value_name("KEY=VALUE")
                .action(ArgAction::Append)
                .help("Override any config key; applied after the --<key> flags"),
        )
        .arg(format_arg());
    ExperimentConfig::keys().into_iter().fold(cmd, |cmd, key| {
        let dashed = key.replace('_', "-");
        let mut arg = Arg::new(key.clone())
            .long(key.clone())
            .value_name("VALUE")
            .allow_negative_numbers(true)
            .help_heading("Config keys");
        if dashed != key {
            arg = arg.visible_alias(dashed);
        }
        cmd.arg(arg)
    })
}

fn cli() -> Command {
    Command::new("affgraph")
        .about("Affinity-graph supervision experiments at desk scale")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_config_flags(
            Command::new("run").about("Train one experiment and write its CSV log and JSON summary"),
        ))
        .subcommand(with_config_flags(
            Command::new("sweep")
                .about("One run per value of a loss setting, merged into one table and a ranking")
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .required(true)
                        .value_parser(["loss_form", "gamma", "lambda"]),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_delimiter(',')
                        .help("Comma-separated values for the axis"),
                ),
        ))
        .subcommand(
            Command::new("recall")
                .about("Recall@K and target mass of a score matrix against a scene's boxes")
                .arg(
                    Arg::new("scores")
                        .long("scores")
                        .required(true)
                        .value_name("FILE")
                        .help("N x N raw scores as headerless CSV, one row per proposal"),
                )
                .arg(
                    Arg::new("scene")
                        .long("scene")
                        .required(true)
                        .value_name("FILE")
                        .help("Scene file with the N proposals and the ground truth"),
                )
                .arg(
                    Arg::new("k")
                        .long("k")
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(usize))
                        .default_value("10,50,100"),
                )
                .arg(
                    Arg::new("pair_mode")
                        .long("pair-mode")
                        .default_value("different_category"),
                )
                .arg(
                    Arg::new("iou_thresh")
                        .long("iou-thresh")
                        .value_parser(clap::value_parser!(f64))
                        .default_value("0.5"),
                )
                .arg(format_arg()),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Check every affinity loss gradient against central differences")
                .arg(
                    Arg::new("instances")
                        .long("instances")
                        .value_parser(clap::value_parser!(usize))
                        .default_value("50"),
                )
                .arg(
                    Arg::new("size")
                        .long("size")
                        .value_parser(clap::value_parser!(usize))
                        .default_value("8"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(clap::value_parser!(u64))
                        .default_value("0"),
                )
                .arg(
                    Arg::new("tol")
                        .long("tol")
                        .value_parser(clap::value_parser!(f64))
                        .default_value("1e-4")
                        .help("Largest acceptable relative error"),
                )
                .arg(format_arg()),
        )
        .subcommand(with_config_flags(
            Command::new("gen-data")
                .about("Write the synthetic data a config would train on (clusters CSV or scene files)"),
        ))
}

/// Config overrides in application order: `--<key>` flags, then `--set`.
fn overrides(m: &ArgMatches) -> affgraph::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for key in ExperimentConfig::keys() {
        if let Some(v) = m.get_one::<String>(&key) {
            out.push((key, v.clone()));
        }
    }
    for s in m.get_many::<String>("set").into_iter().flatten() {
        out.push(affgraph::trainer::parse_override(s)?);
    }
    Ok(out)
}

fn load_config(m: &ArgMatches) -> affgraph::Result<ExperimentConfig> {
    let over = overrides(m)?;
    match m.get_one::<String>("config") {
        Some(path) => ExperimentConfig::load(path.as_ref(), &over),
        None => ExperimentConfig::from_pairs(&over),
    }
}

fn json_output(m: &ArgMatches) -> bool {
    m.get_one::<String>("format").map(String::as_str) == Some("json")
}

fn dispatch(m: &ArgMatches) -> affgraph::Result<String> {
    match m.subcommand() {
        Some(("run", sub)) => commands::run(&load_config(sub)?, json_output(sub)),
        Some(("sweep", sub)) => {
            let values: Vec<String> = sub.get_many::<String>("values").into_iter().flatten().cloned().collect();
            commands::sweep(&load_config(sub)?, sub.get_one::<String>("axis").unwrap(), &values, json_output(sub))
        }
        Some(("recall", sub)) => commands::recall(
            &commands::RecallArgs {
                scores: sub.get_one::<String>("scores").unwrap().into(),
                scene: sub.get_one::<String>("scene").unwrap().into(),
                ks: sub.get_many::<usize>("k").into_iter().flatten().copied().collect(),
                pair_mode: sub.get_one::<String>("pair_mode").unwrap().clone(),
                iou_thresh: *sub.get_one::<f64>("iou_thresh").unwrap(),
            },
            json_output(sub),
        ),
        Some(("gradcheck", sub)) => commands::gradcheck(
            *sub.get_one::<usize>("instances").unwrap(),
            *sub.get_one::<usize>("size").unwrap(),
            *sub.get_one::<u64>("seed").unwrap(),
            *sub.get_one::<f64>("tol").unwrap(),
            json_output(sub),
        ),
        Some(("gen-data", sub)) => commands::gen_data(&load_config(sub)?, json_output(sub)),
        _ => unreachable!("subcommand_required"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match dispatch(&matches) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("affgraph: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn key_flags_and_set_layer_in_order() {
        let m = cli()
            .try_get_matches_from(["affgraph", "run", "--set", "epochs=7", "--epochs", "3", "--loss-form", "l2"])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let cfg = load_config(sub).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.loss.form, affgraph::affinity::LossForm::L2);
    }

    #[test]
    fn front_end_flags_do_not_shadow_config_keys() {
        const FRONT_END_FLAGS: [&str; 3] = ["config", "set", "format"];
        let keys = ExperimentConfig::keys();
        assert!(FRONT_END_FLAGS.iter().all(|f| !keys.iter().any(|k| k == f)));
    }
}
