//! Subcommand implementations.

use std::path::Path;

use fusion_core::estimation::{monte_carlo, MonteCarloConfig};
use fusion_core::frameworks::{
    naive_vs_obedient_demo, Framework, FrameworkKind, FrameworkParams, FusedFramework,
};
use fusion_core::influence::{
    decompose_algorithm, eif_project, eif_solve, gradient_residual, if_family,
    lift_components, lift_to_observed, two_source_solve, variance, IfDecomposition,
};
use fusion_core::model::{canonical_u, check_alignment_tol, check_strong_alignment, FusedLaw, LoadedModel};
use fusion_core::score::FusedModel;
use fusion_core::verify::{appendix_c_grid, appendix_c_law, are_curves, AreRow};
use fusion_core::{Error, ObsFunction};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, Compute, Dgp, Dump};
use crate::output::{emit, json, Table};
use crate::Failure;

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { model, strong, tol } => validate(&model, strong, tol),
        Command::Operator { model, dump, out } => operator(&model, dump, out.as_deref()),
        Command::Influence {
            model,
            psi,
            eif,
            family,
            out,
        } => influence(&model, &psi, eif, family, out.as_deref()),
        Command::Eif { model, psi, out } => eif(&model, &psi, out.as_deref()),
        Command::Decompose { model, psi, out } => decompose(&model, &psi, out.as_deref()),
        Command::Framework {
            kind,
            model,
            compute,
            anchor,
            target,
            out,
        } => framework(kind, &model, compute, FrameworkParams { anchor, target }, out.as_deref()),
        Command::Simulate {
            model,
            framework,
            dgp,
            p_s1,
            n,
            reps,
            seed,
            threads,
            obedient,
            anchor,
            out,
        } => {
            let seed = seed_override(seed)?;
            let fw = match &model {
                Some(path) => framework_for(framework, &LoadedModel::read(path)?, anchor)?,
                None => Framework::new(
                    framework,
                    &framework.default_ideal(),
                    &FrameworkParams { anchor, target: None },
                )?,
            };
            let law = match (&model, dgp) {
                (Some(path), None) => framework_law(&fw, &LoadedModel::read(path)?)?,
                (None, Some(Dgp::AppendixC)) => appendix_c_law(&fw, p_s1)?,
                _ => {
                    return Err(Failure::Usage(
                        "simulate needs exactly one of a model file and --dgp".into(),
                    ))
                }
            };
            let cfg = MonteCarloConfig {
                n_grid: n,
                reps,
                seed,
                obedient,
                threads,
            };
            let report = monte_carlo(&fw, &law, &cfg)?;
            emit(out.as_deref(), &report.to_csv())
        }
        Command::Figure { dgp, grid, out } => {
            let Dgp::AppendixC = dgp;
            let grid = grid.unwrap_or_else(appendix_c_grid);
            if let Some(bad) = grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
                return Err(Failure::Usage(format!("grid value {bad} is not in (0, 1)")));
            }
            let rows = are_curves(&grid)?;
            let mut t = Table::new(&AreRow::COLUMNS);
            for r in &rows {
                t.push_values(&r.values());
            }
            emit(out.as_deref(), &t.to_csv()?)
        }
    }
}

/// `FUSION_SEED` takes precedence over `--seed`.
fn seed_override(seed: u64) -> Result<u64, Failure> {
    match std::env::var("FUSION_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("FUSION_SEED=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn generic_model(m: &LoadedModel) -> Result<FusedModel, Failure> {
    let model = FusedModel::from_law(m.q.clone(), m.law.clone(), m.spec.clone())?;
    Ok(match &m.tangent_basis {
        Some(b) => model.with_tangent_basis(b)?,
        None => model,
    })
}

fn load(path: &Path) -> Result<(LoadedModel, FusedModel), Failure> {
    let m = LoadedModel::read(path)?;
    let model = generic_model(&m)?;
    Ok((m, model))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PsiFile {
    Values(Vec<f64>),
    Object { values: Vec<f64> },
}

fn read_psi(path: &Path, model: &FusedModel) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path)?;
    let psi = match serde_json::from_str(&text).map_err(Error::from)? {
        PsiFile::Values(v) | PsiFile::Object { values: v } => v,
    };
    let cells = model.q.space().len();
    if psi.len() != cells {
        return Err(Error::ShapeMismatch {
            expected: cells,
            found: psi.len(),
        }
        .into());
    }
    Ok(psi)
}

fn validate(path: &Path, strong: bool, tol: f64) -> Result<(), Failure> {
    let m = LoadedModel::read(path)?;
    let mut report = check_alignment_tol(&m.law, &m.q, &m.spec, tol)?;
    if strong && report.aligned {
        report.strong = Some(check_strong_alignment(
            &m.law,
            &m.q,
            &canonical_u(&m.law),
            &m.spec,
        )?);
    }
    emit(None, &json(&report)?)?;
    if report.aligned {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn operator(path: &Path, dump: Dump, out: Option<&Path>) -> Result<(), Failure> {
    let (_, model) = load(path)?;
    let obs = model.obs_cell_names();
    let hn = model.h_coord_names();
    let table = match dump {
        Dump::A => matrix_table(model.score_matrix(), &obs, &hn),
        Dump::Astar => matrix_table(&model.adjoint_matrix(), &hn, &obs),
        Dump::Info => matrix_table(&model.information_operator().entries, &hn, &hn),
        Dump::Tangent => {
            let f = model.tangent_space().functions();
            let names: Vec<String> = (1..=f.len()).map(|i| format!("t{i}")).collect();
            let mut t = Table::new(&header("cell", &names));
            for (r, name) in obs.iter().enumerate() {
                let row: Vec<f64> = f.iter().map(|c| c[r]).collect();
                t.push(name, &row);
            }
            t
        }
    };
    emit(out, &table.to_csv()?)
}

fn header(first: &str, rest: &[String]) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain(rest.iter().cloned())
        .collect()
}

fn matrix_table(m: &nalgebra::DMatrix<f64>, rows: &[String], cols: &[String]) -> Table {
    let mut t = Table::new(&header("row", cols));
    for (r, name) in rows.iter().enumerate() {
        let v: Vec<f64> = m.row(r).iter().copied().collect();
        t.push(name, &v);
    }
    t
}

/// Observed functions as columns of a table indexed by observed cells.
fn obs_table(model: &FusedModel, cols: &[(&str, &ObsFunction)]) -> Table {
    let names: Vec<String> = cols.iter().map(|(n, _)| n.to_string()).collect();
    let mut t = Table::new(&header("cell", &names));
    for (r, name) in model.obs_cell_names().iter().enumerate() {
        let v: Vec<f64> = cols.iter().map(|(_, f)| f[r]).collect();
        t.push(name, &v);
    }
    t
}

fn solve(model: &FusedModel, psi: &[f64]) -> Result<(IfDecomposition, &'static str), Failure> {
    if model.num_sources() == 2 {
        Ok((two_source_solve(model, psi)?, "two-source"))
    } else {
        Ok((decompose_algorithm(model, psi)?, "decompose"))
    }
}

#[derive(Serialize)]
struct InfluenceReport {
    method: String,
    variance: f64,
    gradient_residual: f64,
    mean: f64,
    family_dim: Option<usize>,
}

fn influence(
    path: &Path,
    psi: &Path,
    eif: bool,
    family: Option<usize>,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let (m, model) = load(path)?;
    let psi = read_psi(psi, &model)?;
    let (dec, method) = solve(&model, &psi)?;
    let mut phi = lift_to_observed(&model, &dec);
    let mut method = method.to_string();
    if eif {
        phi = eif_project(&model, &phi);
        method.push_str("+projection");
    }
    let mut cols: Vec<(String, ObsFunction)> = vec![("phi".into(), phi.clone())];
    let mut family_dim = None;
    if let Some(k) = family {
        let fam = if_family(&model, &dec)?;
        family_dim = Some(fam.dim());
        cols.extend(
            fam.directions
                .into_iter()
                .take(k)
                .enumerate()
                .map(|(i, d)| (format!("direction{}", i + 1), d)),
        );
    }
    let report = InfluenceReport {
        method,
        variance: variance(&m.law, &phi),
        gradient_residual: gradient_residual(&model, &phi, &psi),
        mean: m.law.expect(&phi),
        family_dim,
    };
    let refs: Vec<(&str, &ObsFunction)> = cols.iter().map(|(n, f)| (n.as_str(), f)).collect();
    emit_pair(out, &obs_table(&model, &refs), &report)
}

/// CSV to `out` and the JSON report to stdout, or both to stdout (CSV first) without `out`.
fn emit_pair<T: Serialize>(out: Option<&Path>, table: &Table, report: &T) -> Result<(), Failure> {
    match out {
        Some(p) => {
            emit(Some(p), &table.to_csv()?)?;
            emit(None, &json(report)?)
        }
        None => emit(None, &format!("{}{}", table.to_csv()?, json(report)?)),
    }
}

#[derive(Serialize)]
struct EifReport {
    method: &'static str,
    variance: f64,
    residual: f64,
    truncated: usize,
    gradient_residual: f64,
    tangent_dim: usize,
}

fn eif(path: &Path, psi: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (m, model) = load(path)?;
    let psi = read_psi(psi, &model)?;
    let sol = eif_solve(&model, &psi)?;
    let report = EifReport {
        method: "information-equation",
        variance: variance(&m.law, &sol.phi),
        residual: sol.residual,
        truncated: sol.truncated,
        gradient_residual: gradient_residual(&model, &sol.phi, &psi),
        tangent_dim: model.tangent_space().dim(),
    };
    emit_pair(out, &obs_table(&model, &[("phi_eff", &sol.phi)]), &report)
}

#[derive(Serialize)]
struct DecomposeReport {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_source: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reconstruction_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradient_residual: Option<f64>,
}

fn decompose(path: &Path, psi: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let (_, model) = load(path)?;
    let psi = read_psi(psi, &model)?;
    let dec = match decompose_algorithm(&model, &psi) {
        Ok(d) => d,
        Err(Error::DecomposeFail {
            source_index,
            residual,
        }) => {
            let report = DecomposeReport {
                status: "FAIL",
                failed_source: Some(source_index),
                residual: Some(residual),
                reconstruction_error: None,
                gradient_residual: None,
            };
            emit(None, &json(&report)?)?;
            return Err(Failure::Numerical);
        }
        Err(e) => return Err(e.into()),
    };
    let phi = lift_components(&model, &dec.m);
    let report = DecomposeReport {
        status: "OK",
        failed_source: None,
        residual: None,
        reconstruction_error: Some(dec.reconstruction_error()),
        gradient_residual: Some(gradient_residual(&model, &phi, &psi)),
    };
    let mut names = Vec::new();
    let mut cols: Vec<&Vec<f64>> = Vec::new();
    for (j, mj) in dec.m.iter().enumerate() {
        for (k, mk) in mj.iter().enumerate() {
            names.push(format!("m{}_{}", j + 1, k + 1));
            cols.push(mk);
        }
    }
    let space = model.q.space();
    let mut t = Table::new(&header("cell", &names));
    for c in 0..space.len() {
        let v: Vec<f64> = cols.iter().map(|f| f[c]).collect();
        t.push(&space.cell_name(c), &v);
    }
    emit_pair(out, &t, &report)
}

/// The framework on the ideal space of a model file.
fn framework_for(
    kind: FrameworkKind,
    m: &LoadedModel,
    anchor: Option<Vec<String>>,
) -> Result<Framework, Failure> {
    Ok(Framework::new(
        kind,
        m.q.space(),
        &FrameworkParams {
            anchor,
            target: None,
        },
    )?)
}

/// The source laws of a model file, checked against the framework's source spaces.
fn framework_law(fw: &Framework, m: &LoadedModel) -> Result<FusedLaw, Failure> {
    let chains = &fw.spec().chains;
    if m.law.sources.len() != chains.len() {
        return Err(Error::ShapeMismatch {
            expected: chains.len(),
            found: m.law.sources.len(),
        }
        .into());
    }
    for (j, (s, c)) in m.law.sources.iter().zip(chains).enumerate() {
        if s.space() != &c.z_space {
            return Err(Error::InvalidSpec(format!(
                "source {} of the model file does not match the framework, which expects axes {:?}",
                j + 1,
                c.z_space.names()
            ))
            .into());
        }
    }
    Ok(m.law.clone())
}

#[derive(Serialize)]
struct PhiReport {
    framework: String,
    phi: f64,
    /// The target at the ideal law of the model file.
    psi: f64,
    difference: f64,
}

#[derive(Serialize)]
struct IfReport {
    framework: String,
    variance: f64,
    mean: f64,
    gradient_residual: f64,
    family_dim: usize,
}

#[derive(Serialize)]
struct EifCrossCheck {
    framework: String,
    variance: f64,
    closed_form_variance: f64,
    solver_difference: f64,
    projection_difference: f64,
    gradient_residual: f64,
    truncated: usize,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn framework(
    kind: FrameworkKind,
    path: &Path,
    compute: Compute,
    params: FrameworkParams,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let m = LoadedModel::read(path)?;
    let fw = Framework::new(kind, m.q.space(), &params)?;
    let law = framework_law(&fw, &m)?;
    let name = kind.name().to_string();
    match compute {
        Compute::Phi => {
            let phi = fw.phi(&law)?;
            let psi = fw.psi(&m.q)?;
            emit(
                None,
                &json(&PhiReport {
                    framework: name,
                    phi,
                    psi,
                    difference: phi - psi,
                })?,
            )
        }
        Compute::If => {
            let model = fw.model(&law)?;
            let psi1 = fw.ideal_if(&model.q)?;
            let fam = fw.if_family(&law)?;
            let phi = fam.base.clone();
            let report = IfReport {
                framework: name,
                variance: variance(&law, &phi),
                mean: law.expect(&phi),
                gradient_residual: gradient_residual(&model, &phi, &psi1),
                family_dim: fam.dim(),
            };
            let names: Vec<String> = (1..=fam.dim()).map(|i| format!("direction{i}")).collect();
            let mut cols: Vec<(&str, &ObsFunction)> = vec![("phi", &phi)];
            cols.extend(names.iter().map(String::as_str).zip(&fam.directions));
            emit_pair(out, &obs_table(&model, &cols), &report)
        }
        Compute::Eif => {
            let model = fw.model(&law)?;
            let psi1 = fw.ideal_if(&model.q)?;
            let phi = fw.eif(&law)?;
            let cf = fw.closed_form_if(&law)?;
            let sol = eif_solve(&model, &psi1)?;
            let report = EifCrossCheck {
                framework: name,
                variance: variance(&law, &phi),
                closed_form_variance: variance(&law, &cf),
                solver_difference: max_diff(&phi, &sol.phi),
                projection_difference: max_diff(&phi, &eif_project(&model, &cf)),
                gradient_residual: gradient_residual(&model, &phi, &psi1),
                truncated: sol.truncated,
            };
            emit_pair(out, &obs_table(&model, &[("phi_eff", &phi)]), &report)
        }
        Compute::Demo => {
            let ub = fw.as_ub().ok_or_else(|| {
                Failure::Usage(format!(
                    "--compute demo needs a (U, B) framework, not `{}`",
                    kind.name()
                ))
            })?;
            let (u, b) = ub.target_cells();
            let demo = naive_vs_obedient_demo(&fw.model(&law)?, ub.roles(), u, b)?;
            emit(None, &json(&demo)?)
        }
    }
}

