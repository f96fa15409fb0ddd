use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde_json::{json, Value};

use rank1_sparse::bounds::BoundCertificate;
use rank1_sparse::cutting::{cut_loop, CutLoopSettings, CutPool, LoopStatus};
use rank1_sparse::experiments::{generate, metrics, run_synthetic, SyntheticSpec};
use rank1_sparse::formulations::{solve_relaxation, PsdMode, RelaxationKind, RelaxationSpec, SolveOptions};
use rank1_sparse::instance::{diagonal_dominance_with, gram, load_csv, ResponseColumn};
use rank1_sparse::penalty::{penalty_surface, write_surface_csv, Penalty2DParams};
use rank1_sparse::{Error, HyperParams, RegressionInstance, Result};

use crate::{
    Cli, Command, DataArgs, DdArgs, EvalArgs, ExperimentArgs, GenArgs, KindArg, PenaltyGridArgs, RelaxArgs, SyntheticArgs,
    EXIT_ERROR, EXIT_ITERATION_LIMIT, EXIT_OK,
};

pub const SCHEMA: &str = "rank1-sparse/1";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::IterationLimit { .. } => EXIT_ITERATION_LIMIT,
        _ => EXIT_ERROR,
    }
}

pub fn run(cli: &Cli) -> Result<u8> {
    let timing = !cli.no_timing;
    match &cli.command {
        Command::Relax(a) => relax(a, timing),
        Command::Dd(a) => dd(a),
        Command::Gen(a) => gen(a),
        Command::Eval(a) => eval(a),
        Command::PenaltyGrid(a) => penalty_grid(a),
        Command::Experiment(a) => experiment(a, timing),
    }
}

impl KindArg {
    fn kind(self) -> RelaxationKind {
        match self {
            KindArg::Persp => RelaxationKind::Persp,
            KindArg::Sdp1 => RelaxationKind::SdpR(1),
            KindArg::Sdp2 => RelaxationKind::SdpR(2),
            KindArg::Sdp3 => RelaxationKind::SdpR(3),
            KindArg::Sdplb => RelaxationKind::SdpLb,
            KindArg::Sdpdd => RelaxationKind::SdpDd,
            KindArg::Cuts => RelaxationKind::Cuts,
        }
    }
}

impl SyntheticArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec { n: self.n, p: self.p, s: self.s, rho: self.rho, snr: self.snr, seed: self.seed }
    }
}

fn load(data: &DataArgs) -> Result<RegressionInstance> {
    let response: ResponseColumn = data.response.parse()?;
    let inst = load_csv(&data.data, &response)?;
    if data.raw {
        Ok(inst)
    } else {
        inst.standardize()
    }
}

fn document(command: &str, body: Value) -> Value {
    let mut doc = json!({ "schema": SCHEMA, "command": command });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    doc
}

/// Prints the document and mirrors it to `output` when given.
fn emit(doc: &Value, output: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    quiet_pipe(writeln!(io::stdout().lock(), "{text}"))?;
    if let Some(path) = output {
        fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

/// A closed downstream pipe (`| head`) is not an error.
fn quiet_pipe(r: io::Result<()>) -> io::Result<()> {
    match r {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn relax(a: &RelaxArgs, timing: bool) -> Result<u8> {
    let inst = load(&a.data)?;
    let hyper = HyperParams::new(a.lambda, a.mu, a.k);
    hyper.validate(inst.p())?;
    let spec = RelaxationSpec::new(a.kind.kind(), hyper);
    let opts = SolveOptions { tol: a.solver.tol, max_iters: a.solver.max_iters, allow_high_order: a.allow_high_order };
    let start = Instant::now();

    let mut body = json!({ "input": inst.manifest(), "kind": spec.kind.label(), "tol": opts.tol });
    let mut code = EXIT_OK;
    let solved = if spec.kind == RelaxationKind::Cuts {
        let settings = CutLoopSettings { solve: opts, violation_tol: a.violation_tol, max_rounds: a.max_rounds };
        cut_loop(&inst, hyper, CutPool::sdd_start(inst.p()), PsdMode::FullPsd, &settings).map(|res| {
            let status = match &res.status {
                LoopStatus::Converged => "converged".to_string(),
                LoopStatus::RoundLimit => "round_limit".to_string(),
                LoopStatus::SolverFailure(msg) => {
                    code = EXIT_ITERATION_LIMIT;
                    format!("solver_failure: {msg}")
                }
            };
            body["cut_loop"] = json!({ "status": status, "cuts": res.pool.len(), "rounds": res.trace });
            res.solution
        })
    } else {
        solve_relaxation(&inst, spec, &opts)
    };
    let sol = match solved {
        Ok(sol) => sol,
        Err(Error::IterationLimit { residual, iterations }) => {
            body["status"] = json!("iteration_limit");
            body["residual"] = json!(residual);
            body["iterations"] = json!(iterations);
            emit(&document("relax", body), a.output.as_deref())?;
            return Ok(EXIT_ITERATION_LIMIT);
        }
        Err(e) => return Err(e),
    };
    let secs = timing.then(|| start.elapsed().as_secs_f64());
    let cert = BoundCertificate::from_solution(&sol, &inst, secs)?;
    let (beta_original, intercept) = inst.back_transform(&cert.beta_rounded);
    body["status"] = json!(if code == EXIT_OK { "optimal" } else { "unconverged" });
    body["solver_iterations"] = json!(sol.iterations);
    body["certificate"] = serde_json::to_value(&cert)?;
    body["beta_original"] = json!(beta_original);
    body["intercept"] = json!(intercept);
    emit(&document("relax", body), a.output.as_deref())?;
    Ok(code)
}

fn dd(a: &DdArgs) -> Result<u8> {
    let inst = load(&a.data)?;
    if a.lambda.is_nan() || a.lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {}", a.lambda)));
    }
    let value = diagonal_dominance_with(&gram(&inst, a.lambda), a.tol)?;
    let body = json!({ "input": inst.manifest(), "lambda": a.lambda, "dd": value, "dd_percent": 100.0 * value });
    emit(&document("dd", body), a.output.as_deref())?;
    Ok(EXIT_OK)
}

fn gen(a: &GenArgs) -> Result<u8> {
    let spec = a.spec.spec();
    let data = generate(&spec)?;
    fs::create_dir_all(&a.out_dir)?;
    let train = a.out_dir.join("train.csv");
    let validation = a.out_dir.join("validation.csv");
    let truth = a.out_dir.join("truth.json");
    data.train.write_csv(BufWriter::new(File::create(&train)?))?;
    data.validation.write_csv(BufWriter::new(File::create(&validation)?))?;
    let truth_doc = document("gen", json!({ "spec": spec, "beta0": data.beta0.as_slice(), "sigma2": data.sigma2 }));
    fs::write(&truth, format!("{}\n", serde_json::to_string_pretty(&truth_doc)?))?;
    let files: Vec<String> = [&train, &validation, &truth].iter().map(|p| p.display().to_string()).collect();
    emit(&document("gen", json!({ "spec": spec, "files": files })), None)?;
    Ok(EXIT_OK)
}

/// Coefficients from a bare array or from a `relax` report (raw units preferred).
fn read_beta(value: &Value) -> Result<Vec<f64>> {
    let arr = match value {
        Value::Array(_) => value,
        Value::Object(m) => m
            .get("beta_original")
            .or_else(|| m.get("beta"))
            .ok_or_else(|| Error::InvalidArgument("expected an array or an object with beta_original".into()))?,
        _ => return Err(Error::InvalidArgument("coefficients must be a JSON array".into())),
    };
    Ok(serde_json::from_value(arr.clone())?)
}

fn eval(a: &EvalArgs) -> Result<u8> {
    let truth: Value = serde_json::from_str(&fs::read_to_string(&a.truth)?)?;
    let spec: SyntheticSpec = serde_json::from_value(truth["spec"].clone())?;
    let beta0: Vec<f64> = serde_json::from_value(truth["beta0"].clone())?;
    let sigma2 = truth["sigma2"]
        .as_f64()
        .ok_or_else(|| Error::InvalidArgument("truth file lacks sigma2".into()))?;
    let beta = read_beta(&serde_json::from_str(&fs::read_to_string(&a.beta)?)?)?;
    let report = metrics(&beta, &DVector::from_column_slice(&beta0), &spec.sigma(), sigma2)?;
    emit(&document("eval", json!({ "spec": spec, "metrics": report })), a.output.as_deref())?;
    Ok(EXIT_OK)
}

fn penalty_grid(a: &PenaltyGridArgs) -> Result<u8> {
    let (d1, d2) = a.delta.map_or((a.delta1, a.delta2), |d| (d, d));
    let params = Penalty2DParams::new(d1, d2, a.kappa)?;
    let points = penalty_surface(&params, a.extent, a.steps)?;
    match &a.output {
        Some(path) => write_surface_csv(&points, BufWriter::new(File::create(path)?))?,
        None => match write_surface_csv(&points, io::stdout().lock()) {
            Err(Error::Io(e)) => quiet_pipe(Err(e))?,
            other => other?,
        },
    }
    Ok(EXIT_OK)
}

fn experiment(a: &ExperimentArgs, timing: bool) -> Result<u8> {
    let opts = SolveOptions { tol: a.solver.tol, max_iters: a.solver.max_iters, allow_high_order: false };
    let mut out: Box<dyn Write> = match &a.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    for r in 0..a.replications {
        let spec = SyntheticSpec { seed: a.spec.seed + r, ..a.spec.spec() };
        for record in run_synthetic(&spec, a.k_max, &opts, timing)? {
            let line = document("experiment", serde_json::to_value(&record)?);
            serde_json::to_writer(&mut out, &line)?;
            quiet_pipe(out.write_all(b"\n"))?;
        }
    }
    quiet_pipe(out.flush())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_limit_maps_to_its_own_code() {
        assert_eq!(exit_code(&Error::IterationLimit { residual: 1e-3, iterations: 5 }), EXIT_ITERATION_LIMIT);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_ERROR);
        assert_eq!(exit_code(&Error::Solver("x".into())), EXIT_ERROR);
    }

    #[test]
    fn documents_lead_with_schema() {
        let doc = document("dd", json!({ "dd": 0.5 }));
        assert_eq!(doc["schema"], SCHEMA);
        assert_eq!(doc["command"], "dd");
        assert_eq!(doc["dd"], 0.5);
    }

    #[test]
    fn coefficients_from_array_or_report() {
        assert_eq!(read_beta(&json!([1.0, 0.0])).unwrap(), vec![1.0, 0.0]);
        let report = json!({ "beta_original": [2.0], "certificate": { "beta_rounded": [9.0] } });
        assert_eq!(read_beta(&report).unwrap(), vec![2.0]);
        assert!(read_beta(&json!({ "other": 1 })).is_err());
        assert!(read_beta(&json!("text")).is_err());
        assert!(read_beta(&json!(["a"])).is_err());
    }

    #[test]
    fn every_kind_flag_has_a_relaxation() {
        let labels: Vec<String> = [KindArg::Persp, KindArg::Sdp1, KindArg::Sdp2, KindArg::Sdp3, KindArg::Sdplb, KindArg::Sdpdd, KindArg::Cuts]
            .iter()
            .map(|k| k.kind().label())
            .collect();
        assert_eq!(labels, ["persp", "sdp1", "sdp2", "sdp3", "sdplb", "sdpdd", "cuts"]);
    }
}
