use std::fs;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use routegen::cas::{parse_cas, tokenize_cas, CasCommand};
use routegen::content_select::IrlModel;
use routegen::metrics;
use routegen::pipeline::{generate, load_lm, load_seq2seq, FluencyRanker, PipelineConfig, TextGenerator};
use routegen::worldmodel::{load_map, save_map, shortest_path, GridPos, Heading, Pose, WorldMap};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_pose(text: &str) -> PyResult<Pose> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(PyValueError::new_err(format!("pose must be x,y,H (got '{text}')")));
    }
    let x: i32 = parts[0].trim().parse().map_err(err)?;
    let y: i32 = parts[1].trim().parse().map_err(err)?;
    let heading: Heading = parts[2].trim().parse().map_err(err)?;
    Ok(Pose::new(GridPos::new(x, y), heading))
}

/// A grid map of nodes, edges, and placed objects.
#[pyclass(name = "WorldMap")]
struct PyWorldMap {
    inner: WorldMap,
}

#[pymethods]
impl PyWorldMap {
    /// Load a map from a JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = fs::File::open(path).map_err(err)?;
        Ok(PyWorldMap { inner: load_map(f).map_err(err)? })
    }

    /// Parse a map from a JSON string.
    #[staticmethod]
    fn loads(text: &str) -> PyResult<Self> {
        Ok(PyWorldMap { inner: load_map(text.as_bytes()).map_err(err)? })
    }

    fn to_json(&self) -> String {
        save_map(&self.inner)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn objects(&self) -> Vec<((i32, i32), String)> {
        self.inner
            .objects()
            .map(|(p, kind)| ((p.x, p.y), kind.to_string()))
            .collect()
    }

    /// Shortest pose-to-pose path. Poses are "x,y,H" with H one of N/E/S/W.
    /// Returns the pose sequence as (x, y, heading) tuples.
    fn shortest_path(&self, start: &str, goal: &str) -> PyResult<Vec<(i32, i32, String)>> {
        let s = parse_pose(start)?;
        let g = parse_pose(goal)?;
        let path = shortest_path(&self.inner, s, g).map_err(err)?;
        Ok(path
            .poses()
            .iter()
            .map(|p| (p.node.x, p.node.y, p.heading.to_string()))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("WorldMap(nodes={}, edges={})", self.inner.node_count(), self.inner.edge_count())
    }
}

/// A typed instruction command: a sequence of actions with bound attributes.
#[pyclass(name = "Command")]
#[derive(Clone)]
struct PyCommand {
    inner: CasCommand,
}

#[pymethods]
impl PyCommand {
    /// Parse the textual command form, e.g. "Travel(distance=3), Turn(direction=left)".
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyCommand { inner: parse_cas(text).map_err(err)? })
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    /// Source-side tokens fed to the sequence model.
    fn tokens(&self) -> Vec<String> {
        tokenize_cas(&self.inner).tokens
    }

    /// Number of bound attributes across all actions.
    fn eta(&self) -> usize {
        self.inner.eta()
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.actions.len()
    }

    fn __repr__(&self) -> String {
        format!("Command({:?})", self.inner.serialize())
    }
}

/// Normalized token distance between two commands, in [0, 1].
#[pyfunction]
fn token_distance(a: &PyCommand, b: &PyCommand) -> f64 {
    routegen::cas::token_distance(&a.inner, &b.inner)
}

/// Sentence-level 4-gram BLEU (0..100) between whitespace-tokenized strings.
#[pyfunction]
fn bleu_sentence(candidate: &str, reference: &str) -> f64 {
    metrics::bleu_sentence(&metrics::tokens(candidate), &metrics::tokens(reference))
}

/// Corpus-level 4-gram BLEU (0..100) over (candidate, reference) string pairs.
#[pyfunction]
fn bleu_corpus(pairs: Vec<(String, String)>) -> f64 {
    let toks: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(c, r)| (metrics::tokens(c), metrics::tokens(r)))
        .collect();
    metrics::bleu_corpus(&toks)
}

/// End-to-end instruction generator backed by trained checkpoints.
#[pyclass(name = "Generator")]
struct PyGenerator {
    irl: IrlModel,
    generator: TextGenerator,
    ranker: FluencyRanker,
    cfg: PipelineConfig,
}

#[pymethods]
impl PyGenerator {
    /// Load irl.json, seq2seq.json, and lm.json from a checkpoint directory.
    #[staticmethod]
    fn load(checkpoint_dir: &str) -> PyResult<Self> {
        let dir = PathBuf::from(checkpoint_dir);
        let irl_text = fs::read_to_string(dir.join("irl.json")).map_err(err)?;
        let irl = IrlModel::from_json(&irl_text).map_err(err)?;
        let generator = load_seq2seq(&dir.join("seq2seq.json")).map_err(err)?;
        let ranker = load_lm(&dir.join("lm.json")).map_err(err)?;
        let cfg = PipelineConfig { checkpoint_dir: dir, ..PipelineConfig::default() };
        Ok(PyGenerator { irl, generator, ranker, cfg })
    }

    /// Generate a route instruction on `map` from `start` to `goal`
    /// (poses as "x,y,H"). Returns a dict with the full instruction text
    /// and one entry per path segment.
    fn generate<'py>(
        &self,
        py: Python<'py>,
        map: &PyWorldMap,
        start: &str,
        goal: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = parse_pose(start)?;
        let g = parse_pose(goal)?;
        let out = generate(&map.inner, s, g, &self.irl, &self.generator, &self.ranker, &self.cfg)
            .map_err(err)?;
        let d = PyDict::new_bound(py);
        d.set_item("instruction", out.instruction)?;
        let segs: Vec<Bound<'py, PyDict>> = out
            .segments
            .iter()
            .map(|t| {
                let s = PyDict::new_bound(py);
                s.set_item("segment", t.segment)?;
                s.set_item("command", &t.command)?;
                s.set_item("sentence", &t.sentence)?;
                s.set_item("fallback", t.fallback)?;
                s.set_item("perplexity", t.perplexity)?;
                s.set_item("disfluent", t.disfluent)?;
                Ok(s)
            })
            .collect::<PyResult<_>>()?;
        d.set_item("segments", segs)?;
        Ok(d)
    }
}

#[pymodule]
fn routegen_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorldMap>()?;
    m.add_class::<PyCommand>()?;
    m.add_class::<PyGenerator>()?;
    m.add_function(wrap_pyfunction!(token_distance, m)?)?;
    m.add_function(wrap_pyfunction!(bleu_sentence, m)?)?;
    m.add_function(wrap_pyfunction!(bleu_corpus, m)?)?;
    Ok(())
}
