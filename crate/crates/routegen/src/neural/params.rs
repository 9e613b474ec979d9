//! Named parameter storage shared by all the recurrent models. Entries keep
//! insertion order so gradient vectors and optimizer state line up by index.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    /// Row-major matrix data; vectors use cols == 1.
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Param { data, rows, cols }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: IndexMap<String, Param>,
}

pub const INIT_SCALE: f64 = 0.08;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, param: Param) {
        assert!(
            self.map.insert(name.to_string(), param).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.map.get_index_of(name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.map.get(name)
    }

    pub fn entry(&self, idx: usize) -> &Param {
        self.map.get_index(idx).unwrap().1
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut Param {
        self.map.get_index_mut(idx).unwrap().1
    }

    pub fn name(&self, idx: usize) -> &str {
        self.map.get_index(idx).unwrap().0
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &Param> {
        self.map.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|p| p.data.len()).sum()
    }

    /// Register a matrix initialized uniform(-0.08, 0.08).
    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        self.insert(name, Param::uniform(rows, cols, INIT_SCALE, rng));
    }

    /// Register a vector initialized uniform(-0.08, 0.08).
    pub fn add_vector(&mut self, name: &str, len: usize, rng: &mut ChaCha8Rng) {
        self.insert(name, Param::uniform(len, 1, INIT_SCALE, rng));
    }

    /// Register a zero-initialized vector.
    pub fn add_zero_vector(&mut self, name: &str, len: usize) {
        self.insert(name, Param::zeros(len, 1));
    }
}
