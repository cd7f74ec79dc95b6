//! Job files, the body schema, canonical JSON output and the command-line
//! front end.
//!
//! Reals are written as decimal strings with 17 significant digits, which
//! round-trip every `f64` exactly; object keys come out sorted. Inputs may
//! give reals either as JSON numbers or as such strings.

use crate::bounds_inequalities::{
    self as bounds, BoundsError, CapacityMethod, CapacityOptions, CheckSpec, InequalityReport, SOLVER_REL_TOL,
};
use crate::chord_flow::{self, FlowError};
use crate::closed_forms::{closed_form_capacity, example_bodies_catalog, ClosedFormError, Expected};
use crate::convex_bodies::{BodyError, BodyExpr};
use crate::dual_solver::{self, Method, SolveConfig, SolveError, SolveResult};
use crate::symplectic_core::{Frame, SymplecticError};
use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Exit status for schema and usage errors.
pub const EXIT_SCHEMA: i32 = 2;
/// Exit status for domain errors, such as a body missing the subspace.
pub const EXIT_DOMAIN: i32 = 3;
/// Exit status when the solver stops without converging.
pub const EXIT_CONVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at '{pointer}': {message}")]
    Schema { pointer: String, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence; best upper bound {best_upper_bound}")]
    Convergence { best_upper_bound: f64, partial: Box<JobOutput> },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => EXIT_SCHEMA,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Convergence { .. } => EXIT_CONVERGENCE,
            CliError::Io(_) => 1,
        }
    }

    fn schema(pointer: &str, message: impl Into<String>) -> Self {
        CliError::Schema { pointer: pointer.to_string(), message: message.into() }
    }
}

fn from_body(e: BodyError, pointer: &str) -> CliError {
    match e {
        BodyError::InvalidParameter(_) | BodyError::DimensionMismatch { .. } | BodyError::TooFewSamples(_) => {
            CliError::schema(pointer, e.to_string())
        }
        other => CliError::Domain(other.to_string()),
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidConfig(m) => CliError::schema("/solver", m),
            SolveError::Frame(f) => CliError::schema("/frame", f.to_string()),
            SolveError::Body(b) => from_body(b, "/body"),
            SolveError::NoConvergence { best_upper_bound, partial } => CliError::Convergence {
                best_upper_bound,
                partial: Box::new(JobOutput { json: solve_json(&partial, false), csv: Some(carrier_csv(&partial)) }),
            },
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ClosedFormError> for CliError {
    fn from(e: ClosedFormError) -> Self {
        match e {
            ClosedFormError::InvalidParameter(_) => CliError::schema("/body", e.to_string()),
            ClosedFormError::Body(b) => from_body(b, "/body"),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::InvalidParameter(_) => CliError::schema("", e.to_string()),
            FlowError::ClosedForm(c) => c.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Solve(s) => s.into(),
            BoundsError::ClosedForm(c) => c.into(),
            BoundsError::Body(b) => from_body(b, "/check"),
            BoundsError::InvalidParameter(_) | BoundsError::Frame(_) => CliError::schema("/check", e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<SymplecticError> for CliError {
    fn from(e: SymplecticError) -> Self {
        CliError::schema("/frame", e.to_string())
    }
}

/// 17 significant digits: positional for moderate exponents, scientific
/// otherwise.
pub fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..=16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

/// Recursively replace floating-point numbers by [`format_real`] strings.
/// Integers stay numbers.
pub fn canonicalize(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => Value::String(format_real(n.as_f64().unwrap_or(f64::NAN))),
        Value::Array(a) => Value::Array(a.iter().map(canonicalize).collect()),
        Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), canonicalize(v))).collect()),
        other => other.clone(),
    }
}

/// Compact JSON with sorted keys and canonical reals.
pub fn to_canonical_string(v: &Value) -> String {
    canonicalize(v).to_string()
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

/// A JSON value together with its pointer, for error reporting.
#[derive(Clone, Copy)]
struct Node<'a> {
    v: &'a Value,
    ptr: &'a str,
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    ptr: String,
}

impl<'a> Node<'a> {
    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::schema(self.ptr, msg)
    }

    fn obj(&self, allowed: &[&str]) -> Result<Obj<'a>, CliError> {
        let map = self.v.as_object().ok_or_else(|| self.err("expected an object"))?;
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::schema(&format!("{}/{}", self.ptr, escape(key)), "unknown field"));
            }
        }
        Ok(Obj { map, ptr: self.ptr.to_string() })
    }

    fn real(&self) -> Result<f64, CliError> {
        let x = match self.v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        x.ok_or_else(|| self.err("expected a real number"))
    }

    fn uint(&self) -> Result<u64, CliError> {
        self.v.as_u64().ok_or_else(|| self.err("expected a nonnegative integer"))
    }

    fn string(&self) -> Result<&'a str, CliError> {
        self.v.as_str().ok_or_else(|| self.err("expected a string"))
    }

    fn boolean(&self) -> Result<bool, CliError> {
        self.v.as_bool().ok_or_else(|| self.err("expected a boolean"))
    }

    fn array(&self) -> Result<&'a Vec<Value>, CliError> {
        self.v.as_array().ok_or_else(|| self.err("expected an array"))
    }
}

impl<'a> Obj<'a> {
    fn get(&self, key: &str) -> Option<(&'a Value, String)> {
        self.map.get(key).map(|v| (v, format!("{}/{}", self.ptr, escape(key))))
    }

    fn require(&self, key: &str) -> Result<(&'a Value, String), CliError> {
        self.get(key).ok_or_else(|| CliError::schema(&format!("{}/{}", self.ptr, escape(key)), "missing field"))
    }
}

fn reals(v: &Value, ptr: &str) -> Result<Vec<f64>, CliError> {
    Node { v, ptr }
        .array()?
        .iter()
        .enumerate()
        .map(|(i, x)| Node { v: x, ptr: &format!("{ptr}/{i}") }.real())
        .collect()
}

fn real_at(o: &Obj, key: &str) -> Result<f64, CliError> {
    let (v, p) = o.require(key)?;
    Node { v, ptr: &p }.real()
}

fn reals_at(o: &Obj, key: &str) -> Result<Vec<f64>, CliError> {
    let (v, p) = o.require(key)?;
    reals(v, &p)
}

fn body_at(o: &Obj, key: &str, dim: Option<usize>) -> Result<BodyExpr, CliError> {
    let (v, p) = o.require(key)?;
    parse_body_at(v, &p, dim)
}

/// Parse a body document. `dim` resolves the `{"a": x}` shorthand for ball
/// centres (the point with last coordinate `x`) when no `dim` key is given.
pub fn parse_body(v: &Value, dim: Option<usize>) -> Result<BodyExpr, CliError> {
    parse_body_at(v, "", dim)
}

fn parse_body_at(v: &Value, ptr: &str, dim: Option<usize>) -> Result<BodyExpr, CliError> {
    let map = v.as_object().ok_or_else(|| CliError::schema(ptr, "expected an object with one body kind"))?;
    if map.len() != 1 {
        return Err(CliError::schema(ptr, "expected exactly one body kind"));
    }
    let (kind, inner) = map.iter().next().expect("one entry");
    let p = format!("{ptr}/{}", escape(kind));
    let node = Node { v: inner, ptr: &p };
    let wrap = |r: Result<BodyExpr, BodyError>| r.map_err(|e| from_body(e, &p));
    match kind.as_str() {
        "ellipsoid" => wrap(BodyExpr::ellipsoid(reals_at(&node.obj(&["radii"])?, "radii")?)),
        "polydisc" => wrap(BodyExpr::polydisc(reals_at(&node.obj(&["radii"])?, "radii")?)),
        "box" => {
            let o = node.obj(&["intervals"])?;
            let (arr, ap) = o.require("intervals")?;
            let intervals = Node { v: arr, ptr: &ap }
                .array()?
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let rp = format!("{ap}/{i}");
                    let xs = reals(row, &rp)?;
                    <[f64; 4]>::try_from(xs).map_err(|_| CliError::schema(&rp, "expected [a, b, c, d]"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            wrap(BodyExpr::boxes(intervals))
        }
        "ball" => {
            let o = node.obj(&["center", "radius"])?;
            let radius = real_at(&o, "radius")?;
            let (c, cp) = o.require("center")?;
            let center = if c.is_object() {
                let co = Node { v: c, ptr: &cp }.obj(&["a", "dim"])?;
                let a = real_at(&co, "a")?;
                let d = match co.get("dim") {
                    Some((dv, dp)) => Node { v: dv, ptr: &dp }.uint()? as usize,
                    None => dim.ok_or_else(|| CliError::schema(&cp, "the shorthand needs a dimension here"))?,
                };
                if d == 0 {
                    return Err(CliError::schema(&cp, "dimension must be positive"));
                }
                let mut center = vec![0.0; d];
                center[d - 1] = a;
                center
            } else {
                reals(c, &cp)?
            };
            wrap(BodyExpr::ball(center, radius))
        }
        "vertex_polytope" => {
            let o = node.obj(&["vertices", "symmetric"])?;
            let (arr, ap) = o.require("vertices")?;
            let vertices = Node { v: arr, ptr: &ap }
                .array()?
                .iter()
                .enumerate()
                .map(|(i, row)| reals(row, &format!("{ap}/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            let body = wrap(BodyExpr::vertex_polytope(vertices))?;
            match (o.get("symmetric"), body) {
                (Some((sv, sp)), BodyExpr::VertexPolytope { vertices, symmetric }) => {
                    let given = Node { v: sv, ptr: &sp }.boolean()?;
                    if given && !symmetric {
                        return Err(CliError::schema(&sp, "vertices are not centrally symmetric"));
                    }
                    Ok(BodyExpr::VertexPolytope { vertices, symmetric })
                }
                (_, b) => Ok(b),
            }
        }
        "cuboid" => {
            let o = node.obj(&["lower", "upper"])?;
            wrap(BodyExpr::cuboid(reals_at(&o, "lower")?, reals_at(&o, "upper")?))
        }
        "axis_ellipsoid" => wrap(BodyExpr::axis_ellipsoid(reals_at(&node.obj(&["semi_axes"])?, "semi_axes")?)),
        "product" => {
            let o = node.obj(&["left", "right"])?;
            wrap(BodyExpr::product(body_at(&o, "left", None)?, body_at(&o, "right", None)?))
        }
        "lagrangian_product" => {
            let o = node.obj(&["q", "p"])?;
            let half = dim.map(|d| d / 2);
            wrap(BodyExpr::lagrangian_product(body_at(&o, "q", half)?, body_at(&o, "p", half)?))
        }
        "polar" => wrap(BodyExpr::polar(body_at(&node.obj(&["body"])?, "body", dim)?)),
        "symm_diff" => Ok(BodyExpr::symm_diff(body_at(&node.obj(&["body"])?, "body", dim)?)),
        "psum" => {
            let o = node.obj(&["p", "left", "right"])?;
            let p_ = real_at(&o, "p")?;
            wrap(BodyExpr::psum(p_, body_at(&o, "left", dim)?, body_at(&o, "right", dim)?))
        }
        "scale" => {
            let o = node.obj(&["factor", "body"])?;
            wrap(BodyExpr::scale(real_at(&o, "factor")?, body_at(&o, "body", dim)?))
        }
        "translate" => {
            let o = node.obj(&["shift", "body"])?;
            wrap(BodyExpr::translate(reals_at(&o, "shift")?, body_at(&o, "body", dim)?))
        }
        other => Err(CliError::schema(ptr, format!("unknown body kind '{other}'"))),
    }
}

fn real_list(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| Value::String(format_real(*x))).collect())
}

/// The canonical document of a body.
pub fn body_to_json(body: &BodyExpr) -> Value {
    use BodyExpr as B;
    let r = |x: f64| Value::String(format_real(x));
    match body {
        B::Ellipsoid { radii } => json!({"ellipsoid": {"radii": real_list(radii)}}),
        B::Polydisc { radii } => json!({"polydisc": {"radii": real_list(radii)}}),
        B::Box { intervals } => {
            json!({"box": {"intervals": intervals.iter().map(|i| real_list(i)).collect::<Vec<_>>()}})
        }
        B::Ball { center, radius } => json!({"ball": {"center": real_list(center), "radius": r(*radius)}}),
        B::VertexPolytope { vertices, symmetric } => json!({"vertex_polytope": {
            "vertices": vertices.iter().map(|v| real_list(v)).collect::<Vec<_>>(),
            "symmetric": symmetric,
        }}),
        B::Cuboid { lower, upper } => json!({"cuboid": {"lower": real_list(lower), "upper": real_list(upper)}}),
        B::AxisEllipsoid { semi_axes } => json!({"axis_ellipsoid": {"semi_axes": real_list(semi_axes)}}),
        B::Product { left, right } => json!({"product": {"left": body_to_json(left), "right": body_to_json(right)}}),
        B::LagrangianProduct { q, p } => json!({"lagrangian_product": {"q": body_to_json(q), "p": body_to_json(p)}}),
        B::Polar(b) => json!({"polar": {"body": body_to_json(b)}}),
        B::SymmDiff(b) => json!({"symm_diff": {"body": body_to_json(b)}}),
        B::PSum { p, left, right } => {
            json!({"psum": {"p": r(*p), "left": body_to_json(left), "right": body_to_json(right)}})
        }
        B::Scale { factor, body } => json!({"scale": {"factor": r(*factor), "body": body_to_json(body)}}),
        B::Translate { shift, body } => json!({"translate": {"shift": real_list(shift), "body": body_to_json(body)}}),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Capacity,
    Spectrum,
    Chord,
    Check,
    Corpus,
}

/// How the `capacity` command computes its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Route {
    ClosedForm,
    Solver,
    /// Minimal chord of an explicit Hamiltonian flow (ellipsoids and balls).
    Flow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub command: Command,
    pub body: Option<BodyExpr>,
    pub frame: Option<Frame>,
    pub method: Route,
    pub solver: SolveConfig,
    pub radii: Option<Vec<f64>>,
    pub cutoff: Option<f64>,
    pub a: Option<f64>,
    pub radius: Option<f64>,
    pub check: Option<CheckSpec>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl JobSpec {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            body: None,
            frame: None,
            method: Route::Solver,
            solver: SolveConfig::default(),
            radii: None,
            cutoff: None,
            a: None,
            radius: None,
            check: None,
            out: None,
            csv: None,
        }
    }
}

fn parse_enum<T: ValueEnum>(v: &Value, ptr: &str) -> Result<T, CliError> {
    let s = Node { v, ptr }.string()?;
    T::from_str(s, false).map_err(|_| CliError::schema(ptr, format!("unknown value '{s}'")))
}

fn parse_frame(v: &Value, ptr: &str) -> Result<Frame, CliError> {
    let o = Node { v, ptr }.obj(&["n", "k"])?;
    let (nv, np) = o.require("n")?;
    let (kv, kp) = o.require("k")?;
    let n = Node { v: nv, ptr: &np }.uint()? as usize;
    let k = Node { v: kv, ptr: &kp }.uint()? as usize;
    Frame::new(n, k).map_err(|e| CliError::schema(ptr, e.to_string()))
}

fn parse_solver(v: &Value, ptr: &str) -> Result<SolveConfig, CliError> {
    let o = Node { v, ptr }.obj(&["segments", "max_iters", "tol_rel", "restarts", "seed", "p", "method"])?;
    let mut c = SolveConfig::default();
    let uint = |key: &str| -> Result<Option<u64>, CliError> {
        o.get(key).map(|(v, p)| Node { v, ptr: &p }.uint()).transpose()
    };
    let real = |key: &str| -> Result<Option<f64>, CliError> {
        o.get(key).map(|(v, p)| Node { v, ptr: &p }.real()).transpose()
    };
    if let Some(x) = uint("segments")? {
        c.segments = x as usize;
    }
    if let Some(x) = uint("max_iters")? {
        c.max_iters = x as usize;
    }
    if let Some(x) = uint("restarts")? {
        c.restarts = x as usize;
    }
    if let Some(x) = uint("seed")? {
        c.seed = x;
    }
    if let Some(x) = real("tol_rel")? {
        c.tol_rel = x;
    }
    if let Some(x) = real("p")? {
        c.p = x;
    }
    if let Some((v, p)) = o.get("method") {
        c.method = match (Node { v, ptr: &p }).string()? {
            "dual_power" => Method::DualPower,
            "subgradient" => Method::Subgradient,
            other => return Err(CliError::schema(&p, format!("unknown method '{other}'"))),
        };
    }
    Ok(c)
}

fn parse_check(v: &Value, ptr: &str) -> Result<CheckSpec, CliError> {
    let node = Node { v, ptr };
    let kind = node
        .v
        .get("kind")
        .ok_or_else(|| CliError::schema(&format!("{ptr}/kind"), "missing field"))?;
    let kind_ptr = format!("{ptr}/kind");
    let kind = Node { v: kind, ptr: &kind_ptr }.string()?;
    let fields: &[&str] = match kind {
        "j_norm" => &["kind", "body", "k", "symmetrize"],
        "brunn_minkowski" => &["kind", "left", "right", "p", "k"],
        "dk_derivative" => &["kind", "left", "right", "k", "eps"],
        "sandwich" | "inscribed_ball" => &["kind", "body", "k"],
        "k_monotonicity" | "viterbo" => &["kind", "body"],
        "mean_width" => &["kind", "q", "p", "seed", "samples"],
        other => return Err(CliError::schema(&format!("{ptr}/kind"), format!("unknown check '{other}'"))),
    };
    let o = node.obj(fields)?;
    let k = || -> Result<usize, CliError> {
        let (v, p) = o.require("k")?;
        Ok(Node { v, ptr: &p }.uint()? as usize)
    };
    let uint = |key: &str| -> Result<u64, CliError> {
        let (v, p) = o.require(key)?;
        Node { v, ptr: &p }.uint()
    };
    Ok(match kind {
        "j_norm" => CheckSpec::JNorm {
            body: body_at(&o, "body", None)?,
            k: k()?,
            symmetrize: match o.get("symmetrize") {
                Some((v, p)) => Node { v, ptr: &p }.boolean()?,
                None => false,
            },
        },
        "brunn_minkowski" => CheckSpec::BrunnMinkowski {
            left: body_at(&o, "left", None)?,
            right: body_at(&o, "right", None)?,
            p: real_at(&o, "p")?,
            k: k()?,
        },
        "dk_derivative" => CheckSpec::DkDerivative {
            left: body_at(&o, "left", None)?,
            right: body_at(&o, "right", None)?,
            k: k()?,
            eps: reals_at(&o, "eps")?,
        },
        "sandwich" => CheckSpec::Sandwich { body: body_at(&o, "body", None)?, k: k()? },
        "inscribed_ball" => CheckSpec::InscribedBall { body: body_at(&o, "body", None)?, k: k()? },
        "k_monotonicity" => CheckSpec::KMonotonicity { body: body_at(&o, "body", None)? },
        "viterbo" => CheckSpec::Viterbo { body: body_at(&o, "body", None)? },
        _ => CheckSpec::MeanWidth {
            q: body_at(&o, "q", None)?,
            p: body_at(&o, "p", None)?,
            seed: uint("seed")?,
            samples: uint("samples")? as usize,
        },
    })
}

const JOB_FIELDS: &[&str] =
    &["command", "body", "frame", "method", "solver", "radii", "cutoff", "a", "radius", "check", "output"];

/// Parse and validate a job document; unknown fields are rejected.
pub fn parse_job(v: &Value) -> Result<JobSpec, CliError> {
    let o = Node { v, ptr: "" }.obj(JOB_FIELDS)?;
    let (cv, cp) = o.require("command")?;
    let mut job = JobSpec::new(parse_enum(cv, &cp)?);
    if let Some((fv, fp)) = o.get("frame") {
        job.frame = Some(parse_frame(fv, &fp)?);
    }
    if let Some((bv, bp)) = o.get("body") {
        job.body = Some(parse_body_at(bv, &bp, job.frame.map(|f| f.dim()))?);
    }
    if let Some((mv, mp)) = o.get("method") {
        job.method = parse_enum(mv, &mp)?;
    }
    if let Some((sv, sp)) = o.get("solver") {
        job.solver = parse_solver(sv, &sp)?;
    }
    if o.get("radii").is_some() {
        job.radii = Some(reals_at(&o, "radii")?);
    }
    for (key, slot) in [("cutoff", &mut job.cutoff), ("a", &mut job.a), ("radius", &mut job.radius)] {
        if o.get(key).is_some() {
            *slot = Some(real_at(&o, key)?);
        }
    }
    if let Some((cv, cp)) = o.get("check") {
        job.check = Some(parse_check(cv, &cp)?);
    }
    if let Some((ov, op)) = o.get("output") {
        let out = Node { v: ov, ptr: &op }.obj(&["json", "csv"])?;
        for (key, slot) in [("json", &mut job.out), ("csv", &mut job.csv)] {
            if let Some((pv, pp)) = out.get(key) {
                *slot = Some(PathBuf::from(Node { v: pv, ptr: &pp }.string()?));
            }
        }
    }
    Ok(job)
}

/// What a job produces: a JSON document and optionally a CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub json: Value,
    pub csv: Option<String>,
}

fn require<T: Clone>(x: &Option<T>, ptr: &str) -> Result<T, CliError> {
    x.clone().ok_or_else(|| CliError::schema(ptr, "missing field"))
}

fn frame_json(f: &Frame) -> Value {
    json!({"n": f.n(), "k": f.k()})
}

fn samples_json(samples: &[Vec<f64>]) -> Value {
    Value::Array(samples.iter().map(|s| real_list(s)).collect())
}

fn chord_json(c: &dual_solver::Chord) -> Value {
    json!({
        "frame": frame_json(&c.frame),
        "action": c.action,
        "return_time": c.return_time,
        "residuals": c.residuals,
        "samples": samples_json(&c.path.samples),
    })
}

fn samples_csv(frame: &Frame, samples: &[Vec<f64>]) -> String {
    let n = frame.n();
    let mut header: Vec<String> = (1..=n).map(|i| format!("q{i}")).collect();
    header.extend((1..=n).map(|i| format!("p{i}")));
    let mut s = header.join(",");
    s.push('\n');
    for x in samples {
        s.push_str(&x.iter().map(|v| format_real(*v)).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

fn carrier_csv(r: &SolveResult) -> String {
    samples_csv(&r.carrier.frame, &r.carrier.path.samples)
}

fn solve_json(r: &SolveResult, converged: bool) -> Value {
    let v = r.capacity;
    json!({
        "value": v,
        "method": "dual-solver",
        "converged": converged,
        "bracket": [v * (1.0 - SOLVER_REL_TOL), v * (1.0 + SOLVER_REL_TOL)],
        "frame": frame_json(&r.carrier.frame),
        "carrier": chord_json(&r.carrier),
        "diagnostics": {
            "iterations": r.diagnostics.iterations,
            "per_start": r.diagnostics.per_start,
            "stationarity": r.diagnostics.stationarity,
            "interior_point": r.diagnostics.interior_point,
            "multiplier_a0": r.multiplier_a0,
        },
    })
}

/// Radii of the ellipsoid a body reduces to, if any.
fn as_ellipsoid(body: &BodyExpr, frame: &Frame) -> Option<Vec<f64>> {
    match body.simplified() {
        BodyExpr::Ellipsoid { radii } => Some(radii),
        BodyExpr::Ball { center, radius } if frame.is_periodic() || center.iter().all(|c| *c == 0.0) => {
            Some(vec![radius; frame.n()])
        }
        _ => None,
    }
}

fn capacity_job(job: &JobSpec) -> Result<JobOutput, CliError> {
    let body = require(&job.body, "/body")?;
    let frame = require(&job.frame, "/frame")?;
    if body.dim() != frame.dim() {
        return Err(CliError::schema("/body", format!("body dimension {} does not match the frame", body.dim())));
    }
    match job.method {
        Route::ClosedForm => {
            let r = closed_form_capacity(&body, &frame)?;
            Ok(JobOutput {
                json: json!({
                    "value": r.value,
                    "method": "closed_form",
                    "bracket": [r.value, r.value],
                    "frame": frame_json(&frame),
                    "formula_id": r.formula_id,
                    "assumptions": r.assumptions,
                }),
                csv: None,
            })
        }
        Route::Solver => {
            let r = dual_solver::solve(&body, &frame, &job.solver)?;
            Ok(JobOutput { json: solve_json(&r, true), csv: Some(carrier_csv(&r)) })
        }
        Route::Flow => {
            if let Some(radii) = as_ellipsoid(&body, &frame) {
                let top = radii.iter().map(|r| r * r).fold(0.0, f64::max) * std::f64::consts::PI;
                let spec = chord_flow::return_spectrum(&frame, &radii, top)?;
                let first = &spec[0];
                let g = first.generators[0];
                let (z, t) = chord_flow::generator_orbit(&frame, &radii, &g);
                return Ok(JobOutput {
                    json: json!({
                        "value": first.action,
                        "method": "flow",
                        "bracket": [first.action, first.action],
                        "frame": frame_json(&frame),
                        "generator": g,
                        "initial_point": z,
                        "return_time": t,
                    }),
                    csv: None,
                });
            }
            if let BodyExpr::Ball { center, radius } = body.simplified() {
                let (n, k) = (frame.n(), frame.k());
                let a_abs = center[n + k..].iter().map(|c| c * c).sum::<f64>().sqrt();
                // a unitary rotation of the chord planes moves the offset onto p_n
                let a = if center[n + k..2 * n - 1].iter().all(|c| *c == 0.0) { center[2 * n - 1] } else { a_abs };
                let chord = chord_flow::ball_chord(&frame, a, radius)?;
                let shift: Vec<f64> =
                    (0..2 * n).map(|i| if i < n + k { center[i] } else { 0.0 }).collect();
                let samples: Vec<Vec<f64>> = chord
                    .path
                    .samples
                    .iter()
                    .map(|x| x.iter().zip(&shift).map(|(a, b)| a + b).collect())
                    .collect();
                return Ok(JobOutput {
                    json: json!({
                        "value": chord.action,
                        "method": "flow",
                        "bracket": [chord.action, chord.action],
                        "frame": frame_json(&frame),
                        "carrier": chord_json(&chord),
                    }),
                    csv: Some(samples_csv(&frame, &samples)),
                });
            }
            Err(CliError::Domain("the flow route covers ellipsoids and balls only".into()))
        }
    }
}

fn spectrum_job(job: &JobSpec) -> Result<JobOutput, CliError> {
    let frame = require(&job.frame, "/frame")?;
    let radii = match (&job.radii, &job.body) {
        (Some(r), _) => r.clone(),
        (None, Some(b)) => as_ellipsoid(b, &frame).ok_or_else(|| CliError::Domain("spectra exist for ellipsoids only".into()))?,
        (None, None) => return Err(CliError::schema("/radii", "missing field")),
    };
    let cutoff = require(&job.cutoff, "/cutoff")?;
    let spec = chord_flow::return_spectrum(&frame, &radii, cutoff)?;
    Ok(JobOutput {
        json: json!({"frame": frame_json(&frame), "radii": radii, "cutoff": cutoff, "entries": spec}),
        csv: Some(chord_flow::spectrum_csv(&spec)),
    })
}

fn chord_job(job: &JobSpec) -> Result<JobOutput, CliError> {
    let frame = require(&job.frame, "/frame")?;
    let a = require(&job.a, "/a")?;
    let radius = require(&job.radius, "/radius")?;
    let chord = chord_flow::ball_chord(&frame, a, radius)?;
    Ok(JobOutput { json: chord_json(&chord), csv: Some(samples_csv(&frame, &chord.path.samples)) })
}

fn capacity_options(job: &JobSpec) -> CapacityOptions {
    let method = match job.method {
        Route::ClosedForm => CapacityMethod::ClosedForm,
        Route::Solver | Route::Flow => CapacityMethod::Auto,
    };
    CapacityOptions { method, solver: job.solver.clone() }
}

fn reports_json(reports: &[InequalityReport]) -> Value {
    serde_json::to_value(reports).unwrap_or(Value::Null)
}

fn check_job(job: &JobSpec) -> Result<JobOutput, CliError> {
    let spec = require(&job.check, "/check")?;
    let reports = bounds::run_check(&spec, &capacity_options(job))?;
    let all = reports.iter().all(|r| r.holds);
    Ok(JobOutput {
        json: json!({"reports": reports_json(&reports), "all_hold": all}),
        csv: Some(bounds::reports_csv(&reports)),
    })
}

/// One line of the corpus table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorpusRow {
    pub label: String,
    pub formula_id: String,
    pub expected: f64,
    pub lower_bound_only: bool,
    pub computed: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Solve every catalog body and compare with its known value.
pub fn capacity_corpus(cfg: &SolveConfig, rel_tol: f64) -> Vec<Result<CorpusRow, CliError>> {
    example_bodies_catalog()
        .par_iter()
        .map(|e| {
            let r = dual_solver::solve(&e.body, &e.frame, cfg)?;
            let expected = e.expected.value();
            let rel_error = (r.capacity - expected) / expected;
            let pass = match e.expected {
                Expected::Exact(_) => rel_error.abs() < rel_tol,
                Expected::AtLeast(_) => rel_error > -rel_tol,
            };
            let formula_id = closed_form_capacity(&e.body, &e.frame)
                .map(|c| c.formula_id)
                .unwrap_or_else(|_| "lower_bound".into());
            Ok(CorpusRow {
                label: e.label.clone(),
                formula_id,
                expected,
                lower_bound_only: e.expected.is_bound(),
                computed: r.capacity,
                rel_error,
                pass,
            })
        })
        .collect()
}

fn corpus_job(job: &JobSpec) -> Result<JobOutput, CliError> {
    let rows: Vec<CorpusRow> = capacity_corpus(&job.solver, 0.02).into_iter().collect::<Result<_, _>>()?;
    let specs = bounds::inequality_corpus();
    let mut reports = Vec::new();
    for r in bounds::run_corpus(&specs, &capacity_options(job)) {
        reports.extend(r?);
    }
    let mut csv = String::from("label,formula_id,expected,computed,rel_error,pass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label,
            r.formula_id,
            format_real(r.expected),
            format_real(r.computed),
            format_real(r.rel_error),
            r.pass
        ));
    }
    let all = rows.iter().all(|r| r.pass) && reports.iter().all(|r| r.holds);
    Ok(JobOutput {
        json: json!({
            "capacities": serde_json::to_value(&rows).unwrap_or(Value::Null),
            "inequalities": reports_json(&reports),
            "inequality_count": reports.len(),
            "all_pass": all,
        }),
        csv: Some(csv),
    })
}

/// Execute a job.
pub fn run(job: &JobSpec) -> Result<JobOutput, CliError> {
    match job.command {
        Command::Capacity => capacity_job(job),
        Command::Spectrum => spectrum_job(job),
        Command::Chord => chord_job(job),
        Command::Check => check_job(job),
        Command::Corpus => corpus_job(job),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Write the JSON (to `out` or stdout) and the CSV (to `csv`, if asked).
pub fn emit(job: &JobSpec, output: &JobOutput) -> Result<(), CliError> {
    let text = to_canonical_string(&output.json);
    match &job.out {
        Some(p) => write_file(p, &(text + "\n"))?,
        None => println!("{text}"),
    }
    if let (Some(p), Some(csv)) = (&job.csv, &output.csv) {
        write_file(p, csv)?;
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "cochord", version, about = "Capacities of convex bodies relative to coisotropic subspaces")]
pub struct Args {
    /// What to compute; may come from the job file instead.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Job file (JSON); flags override its fields.
    #[arg(long)]
    pub job: Option<PathBuf>,
    /// Body file (JSON).
    #[arg(long)]
    pub body: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<Route>,
    /// Path segments for the solver.
    #[arg(long = "N")]
    pub segments: Option<usize>,
    /// Dual exponent.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Relative stopping tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Ellipsoid radii for `spectrum`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Ball centre offset for `chord`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Ball radius for `chord`.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Caps worker threads.
    #[arg(long, env = "COCHORD_THREADS")]
    pub threads: Option<usize>,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::schema("", format!("{}: invalid JSON: {e}", path.display())))
}

/// Merge a job file with command-line overrides.
pub fn job_from_args(args: &Args) -> Result<JobSpec, CliError> {
    let mut job = match &args.job {
        Some(p) => parse_job(&read_json(p)?)?,
        None => JobSpec::new(args.command.ok_or_else(|| CliError::schema("/command", "no command given"))?),
    };
    if let Some(c) = args.command {
        job.command = c;
    }
    if args.n.is_some() || args.k.is_some() {
        let n = args.n.or(job.frame.map(|f| f.n())).ok_or_else(|| CliError::schema("/frame/n", "missing field"))?;
        let k = args.k.or(job.frame.map(|f| f.k())).unwrap_or(0);
        job.frame = Some(Frame::new(n, k)?);
    }
    if let Some(p) = &args.body {
        job.body = Some(parse_body(&read_json(p)?, job.frame.map(|f| f.dim()))?);
    }
    if let Some(m) = args.method {
        job.method = m;
    }
    let s = &mut job.solver;
    if let Some(x) = args.segments {
        s.segments = x;
    }
    if let Some(x) = args.p {
        s.p = x;
    }
    if let Some(x) = args.seed {
        s.seed = x;
    }
    if let Some(x) = args.restarts {
        s.restarts = x;
    }
    if let Some(x) = args.tol {
        s.tol_rel = x;
    }
    if args.radii.is_some() {
        job.radii = args.radii.clone();
    }
    job.cutoff = args.cutoff.or(job.cutoff);
    job.a = args.a.or(job.a);
    job.radius = args.radius.or(job.radius);
    if args.out.is_some() {
        job.out = args.out.clone();
    }
    if args.csv.is_some() {
        job.csv = args.csv.clone();
    }
    Ok(job)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { 0 };
        }
    };
    if let Some(t) = args.threads.filter(|t| *t > 0) {
        // a second initialization (in tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let outcome = job_from_args(&args).and_then(|job| {
        let out = run(&job);
        match out {
            Ok(o) => emit(&job, &o),
            Err(CliError::Convergence { best_upper_bound, partial }) => {
                emit(&job, &partial)?;
                Err(CliError::Convergence { best_upper_bound, partial })
            }
            Err(e) => Err(e),
        }
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cochord: {e}");
            e.exit_code()
        }
    }
}
