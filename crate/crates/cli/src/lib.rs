//! Command-line frontend: validate spec files, construct imprimitivity bundles,
//! compare equivalences and run the named fixtures.

use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use imprim_core::applications::FIXTURE_KINDS;
use imprim_core::{
    build_imprimitivity_bundle, derived_properties_check, fixture_by_name, random_demi,
    run_fixture, uniqueness_iso, validate_action, validate_demi, validate_equivalence,
    validate_fell_bundle, validate_groupoid, BundleSpecFile, DemiProfile, Error, ValidationReport,
    DEFAULT_TOL,
};
use serde_json::{json, Value};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_STRUCTURAL: i32 = 2;

/// Random trials used by the derived-property suite.
const DERIVED_TRIALS: usize = 4;

#[derive(Parser, Debug)]
#[command(
    name = "imprim",
    version,
    about = "Validate and construct imprimitivity Fell bundles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Relative tolerance; overrides the spec file's own value.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for generated inputs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path (a file, or a directory for fixture exports).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Machine,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run every applicable validator on a spec file (`-` reads standard input).
    Validate { path: String },
    /// Build the imprimitivity bundle of the file's demi-equivalence.
    Construct { path: String },
    /// Compare two equivalences over the same demi-equivalence.
    Compare { a: String, b: String },
    /// Run a named fixture, e.g. `self z2`, `matrix n=2`, `kumjian pair2`, `transformation m2`.
    Fixture {
        #[arg(required = true, num_args = 1..)]
        words: Vec<String>,
    },
    /// Write a random demi-equivalence spec file.
    Generate,
}

/// Exit code and captured streams of one invocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Session<'a> {
    format: ReportFormat,
    tol_override: Option<f64>,
    stdin: &'a mut dyn Read,
    stdout: String,
    stderr: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, stdin: &mut dyn Read) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_STRUCTURAL
            } else {
                EXIT_PASS
            };
            let text = e.render().to_string();
            let (stdout, stderr) = if e.use_stderr() {
                (String::new(), text)
            } else {
                (text, String::new())
            };
            return Outcome {
                code,
                stdout,
                stderr,
            };
        }
    };
    let mut s = Session {
        format: cli.report,
        tol_override: cli.tol,
        stdin,
        stdout: String::new(),
        stderr: String::new(),
    };
    let code = match &cli.command {
        Command::Validate { path } => s.validate(path),
        Command::Construct { path } => s.construct(path, cli.out.as_deref()),
        Command::Compare { a, b } => s.compare(a, b),
        Command::Fixture { words } => s.fixture(words, cli.out.as_deref()),
        Command::Generate => s.generate(cli.seed.unwrap_or(0), cli.out.as_deref()),
    };
    Outcome {
        code,
        stdout: s.stdout,
        stderr: s.stderr,
    }
}

fn error_code(e: &Error) -> i32 {
    if e.is_structural() {
        EXIT_STRUCTURAL
    } else {
        EXIT_FAIL
    }
}

fn reports_code(reports: &[ValidationReport]) -> i32 {
    if reports.iter().any(|r| r.has_structural_errors()) {
        EXIT_STRUCTURAL
    } else if reports.iter().all(|r| r.passed()) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn status(code: i32) -> &'static str {
    match code {
        EXIT_PASS => "pass",
        EXIT_FAIL => "fail",
        _ => "error",
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)
        .map_err(|e| Error::structural(format!("cannot write {}: {e}", path.display())))
}

impl Session<'_> {
    fn read(&mut self, path: &str) -> Result<String, Error> {
        let mut text = String::new();
        if path == "-" {
            self.stdin
                .read_to_string(&mut text)
                .map_err(|e| Error::structural(format!("cannot read standard input: {e}")))?;
        } else {
            text = std::fs::read_to_string(path)
                .map_err(|e| Error::structural(format!("cannot read {path}: {e}")))?;
        }
        Ok(text)
    }

    fn load(&mut self, path: &str) -> Result<BundleSpecFile, Error> {
        let text = self.read(path)?;
        BundleSpecFile::from_json(&text)
    }

    fn tol(&self, spec: Option<&BundleSpecFile>) -> f64 {
        self.tol_override
            .or(spec.and_then(|s| s.tolerance))
            .unwrap_or(DEFAULT_TOL)
    }

    /// Emits the final report. `extra` holds command-specific machine fields and text lines.
    fn finish(
        &mut self,
        command: &str,
        code: i32,
        tol: f64,
        reports: &[ValidationReport],
        error: Option<&Error>,
        extra: (Value, String),
    ) -> i32 {
        let (fields, text) = extra;
        match self.format {
            ReportFormat::Machine => {
                let mut v = json!({
                    "command": command,
                    "status": status(code),
                    "exit_code": code,
                    "tolerance": tol,
                    "reports": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
                });
                if let Some(e) = error {
                    v["error"] = json!(e.to_string());
                }
                if let Value::Object(m) = fields {
                    for (k, x) in m {
                        v[k] = x;
                    }
                }
                let mut out = serde_json::to_string_pretty(&v).expect("report serializes");
                out.push('\n');
                self.emit(&out);
            }
            ReportFormat::Text => {
                let mut out = String::new();
                for r in reports {
                    let _ = write!(out, "{r}");
                }
                out.push_str(&text);
                if let Some(e) = error {
                    let _ = writeln!(out, "error: {e}");
                }
                let _ = writeln!(out, "result: {} (exit {code})", status(code).to_uppercase());
                self.emit(&out);
            }
        }
        code
    }

    /// Reports go to standard output unless it already carries a spec file.
    fn emit(&mut self, text: &str) {
        if self.stdout.is_empty() {
            self.stdout.push_str(text);
        } else {
            self.stderr.push_str(text);
        }
    }

    fn fail(&mut self, command: &str, tol: f64, reports: &[ValidationReport], e: &Error) -> i32 {
        self.finish(
            command,
            error_code(e),
            tol,
            reports,
            Some(e),
            (json!({}), String::new()),
        )
    }

    fn validate(&mut self, path: &str) -> i32 {
        let spec = match self.load(path) {
            Ok(s) => s,
            Err(e) => return self.fail("validate", self.tol(None), &[], &e),
        };
        let tol = self.tol(Some(&spec));
        match validation_reports(&spec, tol) {
            Ok(reports) => {
                let code = reports_code(&reports);
                self.finish(
                    "validate",
                    code,
                    tol,
                    &reports,
                    None,
                    (json!({}), String::new()),
                )
            }
            Err((reports, e)) => self.fail("validate", tol, &reports, &e),
        }
    }

    fn construct(&mut self, path: &str, out: Option<&Path>) -> i32 {
        let spec = match self.load(path) {
            Ok(s) => s,
            Err(e) => return self.fail("construct", self.tol(None), &[], &e),
        };
        let tol = self.tol(Some(&spec));
        let demi = match spec.demi() {
            Ok(Some(d)) => d,
            Ok(None) => {
                return self.fail(
                    "construct",
                    tol,
                    &[],
                    &Error::structural("spec file contains no demi-equivalence"),
                )
            }
            Err(e) => return self.fail("construct", tol, &[], &e),
        };
        let pre = validate_demi(&demi, tol);
        if !pre.passed() {
            let code = reports_code(std::slice::from_ref(&pre));
            return self.finish(
                "construct",
                code,
                tol,
                &[pre],
                None,
                (json!({}), String::new()),
            );
        }
        let imp = match build_imprimitivity_bundle(&demi, tol) {
            Ok(i) => i,
            Err(e) => return self.fail("construct", tol, &[pre], &e),
        };
        let reports = vec![
            pre,
            validate_fell_bundle(imp.bundle(), tol),
            validate_equivalence(&imp.equivalence, tol),
        ];
        let mut file = BundleSpecFile::from_equivalence(&imp.equivalence);
        file.tolerance = spec.tolerance;
        file.seed = spec.seed;
        let text = file.to_json();
        match out {
            Some(p) => {
                if let Err(e) = write_file(p, &text) {
                    return self.fail("construct", tol, &reports, &e);
                }
            }
            None => self.stdout.push_str(&text),
        }
        let dims = imp.bundle().dims.clone();
        let mut lines = String::new();
        let _ = writeln!(lines, "constructed fibre dimensions: {dims:?}");
        let code = reports_code(&reports);
        self.finish(
            "construct",
            code,
            tol,
            &reports,
            None,
            (json!({ "fibre_dims": dims }), lines),
        )
    }

    fn compare(&mut self, a: &str, b: &str) -> i32 {
        let loaded = self.load(a).and_then(|sa| self.load(b).map(|sb| (sa, sb)));
        let (sa, sb) = match loaded {
            Ok(x) => x,
            Err(e) => return self.fail("compare", self.tol(None), &[], &e),
        };
        let tol = self
            .tol_override
            .or(sa.tolerance)
            .or(sb.tolerance)
            .unwrap_or(DEFAULT_TOL);
        let equivalences = sa
            .equivalence()
            .and_then(|ea| sb.equivalence().map(|eb| (ea, eb)));
        let (ea, eb) = match equivalences {
            Ok((Some(ea), Some(eb))) => (ea, eb),
            Ok(_) => {
                return self.fail(
                    "compare",
                    tol,
                    &[],
                    &Error::structural("both files must contain an equivalence section"),
                )
            }
            Err(e) => return self.fail("compare", tol, &[], &e),
        };
        let iso = match uniqueness_iso(&ea, &eb, tol) {
            Ok(i) => i,
            Err(e) => return self.fail("compare", tol, &[], &e),
        };
        let mut lines = String::new();
        let _ = writeln!(lines, "arrow  omega  dim  solve_residual");
        for (g, &w) in iso.base_map.iter().enumerate() {
            let _ = writeln!(
                lines,
                "{:<5}  {:<5}  {:<3}  {:.3e}",
                g, w, ea.bundle.dims[g], iso.fibre_residuals[g]
            );
        }
        let _ = writeln!(lines, "isomorphism residual: {:.3e}", iso.max_residual());
        let fields = json!({
            "omega": iso.base_map,
            "fibre_residuals": iso.fibre_residuals,
            "max_residual": iso.max_residual(),
            "identity": iso.is_identity(tol),
        });
        let reports = [iso.report];
        let code = reports_code(&reports);
        self.finish("compare", code, tol, &reports, None, (fields, lines))
    }

    fn fixture(&mut self, words: &[String], out: Option<&Path>) -> i32 {
        let tol = self.tol(None);
        let parsed = parse_fixture(words);
        let (kind, arg, n) = match parsed {
            Ok(x) => x,
            Err(e) => return self.fail("fixture", tol, &[], &e),
        };
        let f = match fixture_by_name(&kind, &arg, n) {
            Ok(f) => f,
            Err(e) => return self.fail("fixture", tol, &[], &e),
        };
        if let Some(dir) = out {
            let write = std::fs::create_dir_all(dir)
                .map_err(|e| Error::structural(format!("cannot create {}: {e}", dir.display())))
                .and_then(|_| {
                    write_file(
                        &dir.join("demi.json"),
                        &BundleSpecFile::from_demi(&f.demi).to_json(),
                    )
                })
                .and_then(|_| {
                    write_file(
                        &dir.join("expected.json"),
                        &BundleSpecFile::from_equivalence(&f.expected).to_json(),
                    )
                });
            if let Err(e) = write {
                return self.fail("fixture", tol, &[], &e);
            }
        }
        let rep = run_fixture(&f, tol);
        let code = if rep.passed() { EXIT_PASS } else { EXIT_FAIL };
        let stages: Vec<Value> = rep
            .stages
            .iter()
            .map(|s| json!({ "stage": s.stage, "passed": s.passed, "max_residual": s.max_residual, "detail": s.detail }))
            .collect();
        let fields = json!({
            "fixture": rep.name,
            "stages": stages,
            "constructed_dims": rep.constructed_dims,
            "expected_dims": rep.expected_dims,
            "omega": rep.iso.as_ref().map(|i| i.base_map.clone()),
            "max_residual": rep.max_residual(),
        });
        self.finish("fixture", code, tol, &[], None, (fields, rep.to_string()))
    }

    fn generate(&mut self, seed: u64, out: Option<&Path>) -> i32 {
        let tol = self.tol(None);
        let demi = match random_demi(seed, &DemiProfile::default()) {
            Ok(d) => d,
            Err(e) => return self.fail("generate", tol, &[], &e),
        };
        let mut file = BundleSpecFile::from_demi(&demi);
        file.seed = Some(seed);
        let text = file.to_json();
        match out {
            Some(p) => {
                if let Err(e) = write_file(p, &text) {
                    return self.fail("generate", tol, &[], &e);
                }
                let line = format!("wrote {}\n", p.display());
                self.finish(
                    "generate",
                    EXIT_PASS,
                    tol,
                    &[],
                    None,
                    (json!({ "seed": seed }), line),
                )
            }
            None => {
                self.stdout.push_str(&text);
                EXIT_PASS
            }
        }
    }
}

/// Every applicable validator for the sections present in the file.
fn validation_reports(
    spec: &BundleSpecFile,
    tol: f64,
) -> Result<Vec<ValidationReport>, (Vec<ValidationReport>, Error)> {
    let mut reports = Vec::new();
    let g = spec.groupoid().map_err(|e| (Vec::new(), e))?;
    reports.push(validate_groupoid(&g));
    if !reports[0].passed() {
        return Ok(reports);
    }
    let fb = match spec.fell_bundle() {
        Ok(fb) => fb,
        Err(e) => return Err((reports, e)),
    };
    reports.push(validate_fell_bundle(&fb, tol));
    match spec.action() {
        Ok(Some(a)) => reports.push(validate_action(&g, &a)),
        Ok(None) => return Ok(reports),
        Err(e) => return Err((reports, e)),
    }
    let demi = match spec.demi() {
        Ok(Some(d)) => d,
        Ok(None) => return Ok(reports),
        Err(e) => return Err((reports, e)),
    };
    let dr = validate_demi(&demi, tol);
    let demi_ok = dr.passed();
    reports.push(dr);
    if !demi_ok {
        return Ok(reports);
    }
    reports.push(derived_properties_check(&demi, DERIVED_TRIALS, tol));
    match spec.equivalence() {
        Ok(Some(e)) => {
            reports.push(validate_groupoid(&e.bundle.base));
            reports.push(validate_fell_bundle(&e.bundle, tol));
            reports.push(validate_equivalence(&e, tol));
        }
        Ok(None) => {}
        Err(e) => return Err((reports, e)),
    }
    Ok(reports)
}

/// Splits fixture words into kind, bundle argument and matrix size. `n=K` sets the
/// size; the bundle defaults per kind.
pub fn parse_fixture(words: &[String]) -> Result<(String, String, usize), Error> {
    let kind = words[0].clone();
    if !FIXTURE_KINDS.contains(&kind.as_str()) {
        return Err(Error::structural(format!(
            "unknown fixture {kind:?}; known: {}",
            FIXTURE_KINDS.join(", ")
        )));
    }
    let mut n = 1;
    let mut arg = None;
    for w in &words[1..] {
        if let Some(v) = w.strip_prefix("n=") {
            n = v
                .parse()
                .map_err(|_| Error::structural(format!("bad matrix size {w:?}")))?;
        } else if arg.is_none() {
            arg = Some(w.clone());
        } else {
            return Err(Error::structural(format!(
                "unexpected fixture argument {w:?}"
            )));
        }
    }
    let default = match kind.as_str() {
        "kumjian" => "pair2",
        "transformation" => "c",
        _ => "z2",
    };
    Ok((kind, arg.unwrap_or_else(|| default.into()), n))
}
