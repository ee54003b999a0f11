//! Command-line surface.
//!
//! Payloads go to stdout (or `--out`), diagnostics to stderr. Every failure
//! ends with one line `error: <code>: <detail>` on stderr.
//!
//! Exit codes: 0 success, 1 validation errors or infeasible result, 2 usage
//! or parse error, 3 runtime failure (I/O, digest mismatch, replay failure).

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::exec::{self, ExecError, ExecState};
use crate::io::{self, IoError};
use crate::model::{BiPanModel, ModelParts, NodeId};
use crate::pdt::{self, Health, PdtError, PdtInstance, Timestamp};
use crate::plan::{self, DisassemblyMode, Plan, PlanError, SkillInversion};
use crate::validate::validate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bipan",
    version,
    about = "Bi-flow product/process/resource network tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model for structural errors and warnings.
    Validate {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Extract a plan from a model.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Replay a plan against a model.
    Exec {
        plan: PathBuf,
        model: PathBuf,
        /// `initial`, `final` or a JSON file with the starting items.
        /// Defaults to the inventory declared by the plan.
        #[arg(long)]
        inventory: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Import product structure from a CAEX/AutomationML file.
    ImportAml {
        aml: PathBuf,
        /// Enrich this model instead of emitting a products-only model.
        #[arg(long)]
        merge: Option<PathBuf>,
        /// Model id for the products-only output; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a model, optionally with a plan overlay, as Graphviz DOT.
    ExportDot {
        model: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Product digital twin instances.
    #[command(subcommand)]
    Pdt(PdtCommand),
}

#[derive(Debug, Args)]
struct PlanOutput {
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resource registry; an infeasible plan exits with status 1.
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InversionArg {
    /// JSON object mapping assembly skills to disassembly skills.
    #[arg(long)]
    inversion: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PlanCommand {
    Assemble {
        model: PathBuf,
        #[command(flatten)]
        output: PlanOutput,
    },
    /// Full disassembly, or down to `--target`.
    Disassemble {
        model: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_enum, default_value_t = Mode::Extract, requires = "target")]
        mode: Mode,
        #[command(flatten)]
        inversion: InversionArg,
        #[command(flatten)]
        output: PlanOutput,
    },
    Repair {
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        broken: Vec<String>,
        /// `old=new` pairs.
        #[arg(long, value_delimiter = ',', required = true)]
        replace: Vec<String>,
        #[command(flatten)]
        inversion: InversionArg,
        #[command(flatten)]
        output: PlanOutput,
    },
}

#[derive(Debug, Subcommand)]
enum PdtCommand {
    New {
        instance: String,
        model: PathBuf,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    SetHealth {
        instance: String,
        component: String,
        health: Health,
        #[arg(long)]
        at: String,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    Log {
        instance: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    PlanRepair {
        instance: String,
        /// `old=new` pairs, one per broken component.
        #[arg(long, value_delimiter = ',', required = true)]
        replace: Vec<String>,
        /// Defaults to `<dir>/<model_id>.bipan.json`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Event timestamp; defaults to the timestamp of the latest event.
        #[arg(long)]
        at: Option<String>,
        #[command(flatten)]
        inversion: InversionArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Expose,
    Extract,
}

impl From<Mode> for DisassemblyMode {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Expose => DisassemblyMode::Expose,
            Mode::Extract => DisassemblyMode::Extract,
        }
    }
}

#[derive(Debug)]
struct Failure {
    exit: i32,
    code: String,
    detail: String,
}

impl Failure {
    fn new(exit: i32, code: &str, detail: impl ToString) -> Self {
        Failure {
            exit,
            code: code.to_string(),
            detail: detail.to_string(),
        }
    }

    fn usage(detail: impl ToString) -> Self {
        Failure::new(EXIT_USAGE, "usage", detail)
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        let exit = match e {
            PlanError::InvalidModel(_) | PlanError::Model(_) => EXIT_INVALID,
            _ => EXIT_USAGE,
        };
        let detail = match &e {
            PlanError::InvalidModel(d) => format!("{} validation error(s)", d.errors().count()),
            other => other.to_string(),
        };
        Failure::new(exit, e.code(), detail)
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        let exit = match e {
            ExecError::InvalidModel(_) => EXIT_INVALID,
            _ => EXIT_RUNTIME,
        };
        Failure::new(exit, e.code(), e.to_string())
    }
}

impl From<PdtError> for Failure {
    fn from(e: PdtError) -> Self {
        match e {
            PdtError::Plan(p) => p.into(),
            PdtError::InvalidModel | PdtError::NothingBroken => {
                Failure::new(EXIT_INVALID, e.code(), e.to_string())
            }
            PdtError::DigestMismatch { .. } => Failure::new(EXIT_RUNTIME, e.code(), e.to_string()),
            _ => Failure::new(EXIT_USAGE, e.code(), e.to_string()),
        }
    }
}

type CliResult = Result<i32, Failure>;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn emit(&mut self, path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
        match path {
            Some(path) => fs::write(path, bytes)
                .map_err(|e| Failure::new(EXIT_RUNTIME, "io", format!("{}: {e}", path.display()))),
            None => self
                .out
                .write_all(bytes)
                .map_err(|e| Failure::new(EXIT_RUNTIME, "io", e)),
        }
    }

    fn note(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.err, "{}", line.as_ref());
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn io_failure(path: &Path, e: IoError) -> Failure {
    Failure::new(EXIT_USAGE, e.code(), format!("{}: {e}", path.display()))
}

fn read_model(path: &Path) -> Result<BiPanModel, Failure> {
    io::load_model(&read(path)?).map_err(|e| io_failure(path, e))
}

fn read_plan(path: &Path) -> Result<Plan, Failure> {
    io::load_plan(&read(path)?).map_err(|e| io_failure(path, e))
}

fn read_inversion(arg: &InversionArg) -> Result<SkillInversion, Failure> {
    match &arg.inversion {
        None => Ok(SkillInversion::default()),
        Some(path) => {
            serde_json::from_slice(&read(path)?).map_err(|e| io_failure(path, IoError::from(e)))
        }
    }
}

fn node_id(raw: &str) -> Result<NodeId, Failure> {
    NodeId::new(raw.trim()).map_err(|e| Failure::new(EXIT_USAGE, e.code(), e))
}

fn parse_replacements(pairs: &[String]) -> Result<BTreeMap<NodeId, NodeId>, Failure> {
    pairs
        .iter()
        .map(|pair| {
            let (old, new) = pair.split_once('=').ok_or_else(|| {
                Failure::usage(format!("--replace expects old=new, got {pair:?}"))
            })?;
            Ok((node_id(old)?, node_id(new)?))
        })
        .collect()
}

/// Writes the model's validation errors to stderr and fails when there are any.
fn require_valid(io: &mut Io, model: &BiPanModel) -> Result<(), Failure> {
    let diagnostics = validate(model);
    if diagnostics.has_errors() {
        for d in diagnostics.errors() {
            io.note(d.to_string());
        }
        return Err(Failure::new(
            EXIT_INVALID,
            "invalid-model",
            format!("{} validation error(s)", diagnostics.errors().count()),
        ));
    }
    Ok(())
}

fn cmd_validate(io: &mut Io, model: &Path, format: Format) -> CliResult {
    let model = read_model(model)?;
    let diagnostics = validate(&model);
    let errors = diagnostics.errors().count();
    let warnings = diagnostics.warnings().count();
    match format {
        Format::Text => {
            let mut text = diagnostics.to_string();
            let verdict = if errors == 0 { "OK" } else { "FAILED" };
            text.push_str(&format!(
                "{verdict} ({errors} errors, {warnings} warnings)\n"
            ));
            io.emit(None, text.as_bytes())?;
        }
        Format::Json => {
            let report = serde_json::json!({
                "diagnostics": diagnostics.items,
                "errors": errors,
                "warnings": warnings,
            });
            io.emit(None, &io::to_canonical(&report))?;
        }
    }
    if errors > 0 {
        return Err(Failure::new(
            EXIT_INVALID,
            "validation",
            format!("{errors} error(s), {warnings} warning(s)"),
        ));
    }
    Ok(EXIT_OK)
}

fn finish_plan(io: &mut Io, plan: &Plan, output: &PlanOutput) -> CliResult {
    // read the registry before writing anything
    let registry = match &output.registry {
        Some(path) => Some(io::load_registry(&read(path)?).map_err(|e| io_failure(path, e))?),
        None => None,
    };
    io.emit(output.out.as_deref(), &io::save_plan(plan))?;
    if let Some(registry) = registry {
        let report = plan::check_feasibility(plan, &registry);
        if !report.feasible {
            let mut missing = BTreeSet::new();
            for step in report.missing() {
                io.note(format!(
                    "step {} ({}): missing {}",
                    step.step,
                    step.process,
                    step.missing_skills.join(", ")
                ));
                missing.extend(step.missing_skills.iter().cloned());
            }
            return Err(Failure::new(
                EXIT_INVALID,
                "infeasible",
                format!(
                    "missing skills: {}",
                    missing.into_iter().collect::<Vec<_>>().join(", ")
                ),
            ));
        }
        io.note("feasible");
    }
    Ok(EXIT_OK)
}

fn cmd_plan(io: &mut Io, command: PlanCommand) -> CliResult {
    match command {
        PlanCommand::Assemble { model, output } => {
            let model = read_model(&model)?;
            require_valid(io, &model)?;
            let plan = plan::assembly_recipe(&model)?;
            finish_plan(io, &plan, &output)
        }
        PlanCommand::Disassemble {
            model,
            target,
            mode,
            inversion,
            output,
        } => {
            let model = read_model(&model)?;
            let inv = read_inversion(&inversion)?;
            require_valid(io, &model)?;
            let plan = match target {
                Some(target) => plan::disassembly_to(&model, &target, mode.into(), &inv)?,
                None => plan::full_disassembly(&model, &inv)?,
            };
            finish_plan(io, &plan, &output)
        }
        PlanCommand::Repair {
            model,
            broken,
            replace,
            inversion,
            output,
        } => {
            let model = read_model(&model)?;
            let inv = read_inversion(&inversion)?;
            let broken = broken
                .iter()
                .map(|b| node_id(b))
                .collect::<Result<BTreeSet<_>, _>>()?;
            let replacements = parse_replacements(&replace)?;
            require_valid(io, &model)?;
            let plan = plan::repair_plan(&model, &broken, &replacements, &inv)?;
            finish_plan(io, &plan, &output)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InventoryFile {
    Items(Vec<NodeId>),
    State(ExecState),
}

fn cmd_exec(
    io: &mut Io,
    plan_path: &Path,
    model_path: &Path,
    inventory: Option<&str>,
    format: Format,
) -> CliResult {
    let plan = read_plan(plan_path)?;
    let model = read_model(model_path)?;
    let start = match inventory {
        None => ExecState::with_items(plan.start.iter().cloned()),
        Some("initial") => exec::initial_inventory(&model)?,
        Some("final") => {
            let mut state = exec::final_inventory(&model)?;
            state
                .present
                .extend(plan.replacements().into_iter().cloned());
            state
        }
        Some(path) => {
            let path = Path::new(path);
            let parsed: InventoryFile = serde_json::from_slice(&read(path)?)
                .map_err(|e| io_failure(path, IoError::from(e)))?;
            match parsed {
                InventoryFile::Items(items) => ExecState::with_items(items),
                InventoryFile::State(state) => state,
            }
        }
    };
    let trace = exec::run(&plan, &start, &model)?;
    match format {
        Format::Json => io.emit(None, &io::to_canonical(&trace))?,
        Format::Text => {
            let mut text = format!("start: {}\n", trace.start);
            for entry in &trace.entries {
                text.push_str(&format!(
                    "#{} {} -> {}\n",
                    entry.step, plan.steps[entry.step], entry.state
                ));
            }
            text.push_str(&format!("final: {}\n", trace.final_state()));
            io.emit(None, text.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_import_aml(
    io: &mut Io,
    aml: &Path,
    merge_into: Option<&Path>,
    id: Option<String>,
    out: Option<&Path>,
) -> CliResult {
    let fragment = io::import_aml(&read(aml)?)
        .map_err(|e| Failure::new(EXIT_USAGE, e.code(), format!("{}: {e}", aml.display())))?;
    let model = match merge_into {
        Some(path) => {
            let model = read_model(path)?;
            io::merge(&fragment, &model).map_err(|e| Failure::new(EXIT_USAGE, e.code(), e))?
        }
        None => {
            let id = id.unwrap_or_else(|| {
                aml.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let mut parts = ModelParts::new(id);
            parts.products = fragment.products.into_iter().map(|p| p.node).collect();
            parts
                .build()
                .map_err(|e| Failure::new(EXIT_USAGE, e.code(), e))?
        }
    };
    io.emit(out, &io::save_model(&model))?;
    Ok(EXIT_OK)
}

fn cmd_export_dot(io: &mut Io, model: &Path, plan: Option<&Path>, out: Option<&Path>) -> CliResult {
    let model = read_model(model)?;
    let plan = plan.map(read_plan).transpose()?;
    io.emit(out, io::export_dot(&model, plan.as_ref()).as_bytes())?;
    Ok(EXIT_OK)
}

fn timestamp(raw: &str) -> Result<Timestamp, Failure> {
    Ok(Timestamp::parse(raw)?)
}

fn load_instance(dir: &Path, instance: &str) -> Result<PdtInstance, Failure> {
    pdt::load_instance(dir, instance).map_err(|e| match e {
        PdtError::File { .. } | PdtError::Io(_) => Failure::new(EXIT_USAGE, e.code(), e),
        other => other.into(),
    })
}

fn save_instance(dir: &Path, instance: &PdtInstance) -> Result<PathBuf, Failure> {
    pdt::save_instance(dir, instance).map_err(|e| Failure::new(EXIT_RUNTIME, e.code(), e))
}

fn cmd_pdt(io: &mut Io, command: PdtCommand) -> CliResult {
    match command {
        PdtCommand::New {
            instance,
            model,
            dir,
        } => {
            let model = read_model(&model)?;
            require_valid(io, &model)?;
            let twin = PdtInstance::create(&instance, &model)?;
            let path = save_instance(&dir, &twin)?;
            io.note(format!("created {}", path.display()));
        }
        PdtCommand::SetHealth {
            instance,
            component,
            health,
            at,
            dir,
        } => {
            let at = timestamp(&at)?;
            let twin = load_instance(&dir, &instance)?.set_health(&component, health, at)?;
            save_instance(&dir, &twin)?;
            io.note(format!("{component}: {health}"));
        }
        PdtCommand::Log {
            instance,
            format,
            dir,
        } => {
            let twin = load_instance(&dir, &instance)?;
            match format {
                Format::Json => io.emit(None, &io::save_pdt(&twin))?,
                Format::Text => {
                    let mut text = format!(
                        "{} (model {} @ {})\n",
                        twin.instance_id, twin.model_id, twin.model_digest
                    );
                    for event in &twin.events {
                        let payload: Vec<String> = event
                            .payload
                            .iter()
                            .map(|(k, v)| format!("{k}={v}"))
                            .collect();
                        text.push_str(&format!(
                            "{} {} {}\n",
                            event.timestamp,
                            event.kind,
                            payload.join(" ")
                        ));
                    }
                    io.emit(None, text.as_bytes())?;
                }
            }
        }
        PdtCommand::PlanRepair {
            instance,
            replace,
            model,
            at,
            inversion,
            out,
            dir,
        } => {
            let twin = load_instance(&dir, &instance)?;
            let model_path =
                model.unwrap_or_else(|| dir.join(format!("{}.bipan.json", twin.model_id)));
            let model = read_model(&model_path)?;
            let inv = read_inversion(&inversion)?;
            let replacements = parse_replacements(&replace)?;
            twin.check_model(&model)?;
            if twin.broken().is_empty() {
                return Err(PdtError::NothingBroken.into());
            }
            let at = match at {
                Some(raw) => timestamp(&raw)?,
                None => twin
                    .last_timestamp()
                    .cloned()
                    .ok_or_else(|| Failure::usage("--at is required when the log is empty"))?,
            };
            let (twin, plan) = twin.plan_repair(&model, &replacements, &inv, at)?;
            io.emit(out.as_deref(), &io::save_plan(&plan))?;
            save_instance(&dir, &twin)?;
        }
    }
    Ok(EXIT_OK)
}

fn dispatch(io: &mut Io, cli: Cli) -> CliResult {
    match cli.command {
        Command::Validate { model, format } => cmd_validate(io, &model, format),
        Command::Plan(command) => cmd_plan(io, command),
        Command::Exec {
            plan,
            model,
            inventory,
            format,
        } => cmd_exec(io, &plan, &model, inventory.as_deref(), format),
        Command::ImportAml {
            aml,
            merge,
            id,
            out,
        } => cmd_import_aml(io, &aml, merge.as_deref(), id, out.as_deref()),
        Command::ExportDot { model, plan, out } => {
            cmd_export_dot(io, &model, plan.as_deref(), out.as_deref())
        }
        Command::Pdt(command) => cmd_pdt(io, command),
    }
}

/// Runs the CLI with explicit arguments and streams; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            let _ = write!(err, "{rendered}");
            let first = rendered
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let _ = writeln!(err, "error: usage: {first}");
            return EXIT_USAGE;
        }
    };
    let mut io = Io { out, err };
    match dispatch(&mut io, cli) {
        Ok(code) => code,
        Err(failure) => {
            let detail = failure.detail.replace('\n', "; ");
            io.note(format!("error: {}: {}", failure.code, detail));
            failure.exit
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
