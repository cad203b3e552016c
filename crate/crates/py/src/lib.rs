//! Python bindings: edit metrics, text metrics, survey statistics and corpus
//! analysis. Aggregate reports are returned as plain dicts and lists.

use std::path::PathBuf;

use counterkit::corpus::{load_corpus, save_corpus};
use counterkit::editmetrics;
use counterkit::selection;
use counterkit::stats::{self, Alternative};
use counterkit::textmetrics::{self, RrConfig};
use counterkit::tokenize as tok;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(counterkit_py, CounterkitError, PyException);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kit_err(e: impl std::fmt::Display) -> PyErr {
    CounterkitError::new_err(e.to_string())
}

/// Serializable value to native Python objects via the `json` module.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(kit_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(module = "counterkit_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct TerResult {
    edits: usize,
    ter: f64,
    insertions: usize,
    deletions: usize,
    substitutions: usize,
    shifts: usize,
}

#[pymethods]
impl TerResult {
    fn __repr__(&self) -> String {
        format!(
            "TerResult(ter={}, edits={}, ins={}, del={}, sub={}, shift={})",
            self.ter, self.edits, self.insertions, self.deletions, self.substitutions, self.shifts
        )
    }
}

#[pyclass(module = "counterkit_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Readability {
    fres: f64,
    fkg: f64,
    cw: f64,
    words: usize,
    sentences: usize,
    syllables: usize,
    complex_words: usize,
}

#[pymethods]
impl Readability {
    fn __repr__(&self) -> String {
        format!("Readability(fres={}, fkg={}, cw={})", self.fres, self.fkg, self.cw)
    }
}

#[pyclass(module = "counterkit_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct RepetitionRate {
    rr: f64,
    rr_raw: f64,
}

#[pymethods]
impl RepetitionRate {
    fn __repr__(&self) -> String {
        format!("RepetitionRate(rr={}, rr_raw={})", self.rr, self.rr_raw)
    }
}

#[pyclass(module = "counterkit_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct MwuResult {
    u: f64,
    u_b: f64,
    p: f64,
    exact: bool,
    degenerate: bool,
}

#[pyclass(module = "counterkit_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct KappaResult {
    kappa: f64,
    po: f64,
    pe: f64,
    degenerate: bool,
}

/// Lowercased word tokens with each punctuation character split off.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    tok::tokens(text)
}

/// Translation edit rate of `hypothesis` against `reference`.
#[pyfunction]
fn ter(hypothesis: &str, reference: &str) -> PyResult<TerResult> {
    let r = editmetrics::ter(&tok::tokenize(hypothesis), &tok::tokenize(reference)).map_err(value_err)?;
    Ok(TerResult {
        edits: r.edits,
        ter: r.ter,
        insertions: r.breakdown.ins,
        deletions: r.breakdown.del,
        substitutions: r.breakdown.sub,
        shifts: r.breakdown.shift,
    })
}

/// HTER of a generated text against its post-edited version.
#[pyfunction]
fn hter_pair(generated: &str, edited: &str) -> PyResult<f64> {
    editmetrics::hter_pair(generated, edited).map_err(value_err)
}

#[pyfunction]
fn readability(texts: Vec<String>) -> PyResult<Readability> {
    let r = textmetrics::readability(&texts).map_err(value_err)?;
    Ok(Readability {
        fres: r.fres,
        fkg: r.fkg,
        cw: r.cw,
        words: r.words,
        sentences: r.sentences,
        syllables: r.syllables,
        complex_words: r.complex_words,
    })
}

#[pyfunction]
#[pyo3(signature = (texts, seed=0))]
fn repetition_rate(py: Python<'_>, texts: Vec<String>, seed: u64) -> PyResult<RepetitionRate> {
    let r = py.detach(|| textmetrics::repetition_rate(&texts, seed)).map_err(value_err)?;
    Ok(RepetitionRate { rr: r.rr, rr_raw: r.rr_raw })
}

/// P(X >= k) for X ~ Binomial(n, p0).
#[pyfunction]
#[pyo3(signature = (k, n, p0=0.5))]
fn binomial_one_sided(k: u64, n: u64, p0: f64) -> PyResult<f64> {
    stats::binomial_one_sided(k, n, p0).map_err(value_err)
}

#[pyfunction]
fn star(p: f64) -> &'static str {
    stats::star(p)
}

#[pyfunction]
#[pyo3(signature = (a, b, alternative="two-sided"))]
fn mann_whitney_u(a: Vec<f64>, b: Vec<f64>, alternative: &str) -> PyResult<MwuResult> {
    let alt = match alternative {
        "two-sided" => Alternative::TwoSided,
        "less" => Alternative::Less,
        "greater" => Alternative::Greater,
        other => return Err(PyValueError::new_err(format!("unknown alternative {other:?}"))),
    };
    let r = stats::mann_whitney_u(&a, &b, alt).map_err(value_err)?;
    Ok(MwuResult { u: r.u, u_b: r.u_b, p: r.p, exact: r.method == stats::MwuMethod::Exact, degenerate: r.degenerate })
}

#[pyfunction]
fn cohens_kappa(a: Vec<String>, b: Vec<String>) -> PyResult<KappaResult> {
    let r = stats::cohens_kappa(&a, &b).map_err(value_err)?;
    Ok(KappaResult { kappa: r.kappa, po: r.po, pe: r.pe, degenerate: r.degenerate })
}

#[pyfunction]
fn spearman_rho(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    stats::spearman_rho(&a, &b).map_err(value_err)
}

/// A validated corpus loaded from a JSONL file.
#[pyclass(module = "counterkit_py", frozen)]
struct Corpus {
    inner: counterkit::Corpus,
}

#[pymethods]
impl Corpus {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => load_corpus(&p).map_err(kit_err)?,
            None => counterkit::Corpus::empty(),
        };
        Ok(Corpus { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_corpus(&self.inner, &path).map_err(kit_err)
    }

    fn counts(&self) -> std::collections::BTreeMap<&'static str, usize> {
        self.inner.counts()
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records())
    }

    fn claims<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.claims())
    }

    /// Per (strategy, role) post-editing effort over edited records.
    fn edit_effort<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let r = editmetrics::edit_effort_report(self.inner.records()).map_err(kit_err)?;
        to_py(py, &r)
    }

    /// Repetition rate and readability per (strategy, role, side).
    #[pyo3(signature = (seed=0))]
    fn text_quality<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let records = self.inner.records();
        let r = py.detach(|| textmetrics::quality_report(records, None, seed, &RrConfig::default())).map_err(kit_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (n=1, drop_stopwords=true))]
    fn lexdiff<'py>(&self, py: Python<'py>, n: usize, drop_stopwords: bool) -> PyResult<Bound<'py, PyAny>> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be >= 1"));
        }
        to_py(py, &editmetrics::lexdiff(self.inner.records(), n, drop_stopwords))
    }

    #[pyo3(signature = (min_hter=selection::DEFAULT_MIN_HTER, double_per_strategy=selection::DEFAULT_DOUBLE_PER_STRATEGY, seed=0))]
    fn select_eval_pairs<'py>(
        &self,
        py: Python<'py>,
        min_hter: f64,
        double_per_strategy: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &selection::select_eval_pairs(self.inner.records(), min_hter, double_per_strategy, seed))
    }

    fn preference_table<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &stats::preference_table(self.inner.responses()))
    }

    fn __repr__(&self) -> String {
        let counts: Vec<String> = self.inner.counts().iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("Corpus({})", counts.join(", "))
    }
}

#[pymodule]
fn counterkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CounterkitError", m.py().get_type::<CounterkitError>())?;
    m.add_class::<TerResult>()?;
    m.add_class::<Readability>()?;
    m.add_class::<RepetitionRate>()?;
    m.add_class::<MwuResult>()?;
    m.add_class::<KappaResult>()?;
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(ter, m)?)?;
    m.add_function(wrap_pyfunction!(hter_pair, m)?)?;
    m.add_function(wrap_pyfunction!(readability, m)?)?;
    m.add_function(wrap_pyfunction!(repetition_rate, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_one_sided, m)?)?;
    m.add_function(wrap_pyfunction!(star, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    Ok(())
}
