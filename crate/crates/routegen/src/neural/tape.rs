//! Reverse-mode automatic differentiation on a flat tape of vector-valued
//! nodes. Every forward op appends one node; backward walks the tape once
//! in reverse, accumulating gradients for tape nodes and named parameters.

use super::params::ParamStore;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input, no gradient.
    Input,
    /// Vector parameter, by store index.
    Param(usize),
    /// Matrix parameter times a vector node.
    MatVec(usize, NodeId),
    /// One row of a matrix parameter (embedding lookup).
    Row(usize, usize),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(NodeId, NodeId),
    Slice(NodeId, usize, usize),
    Dot(NodeId, NodeId),
    /// Scalar nodes stacked into a vector.
    Stack(Vec<NodeId>),
    Softmax(NodeId),
    /// Vector scaled by a length-1 node.
    ScaleBy(NodeId, NodeId),
    ScaleConst(NodeId, f64),
    /// Elementwise sum of same-length vectors.
    SumAll(Vec<NodeId>),
    /// logsumexp(logits) - logits[target]; the per-step cross entropy.
    NllFromLogits(NodeId, usize),
}

struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Parameter gradients aligned with the store's entry order.
pub struct Gradients {
    pub by_entry: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Gradients {
            by_entry: store.entries().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.by_entry.iter_mut().zip(other.by_entry.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.by_entry.iter_mut() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.by_entry
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.by_entry.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> NodeId {
        self.input(vec![0.0; len])
    }

    /// A vector parameter as a tape node.
    pub fn param(&mut self, name: &str) -> NodeId {
        let idx = self.store.index_of(name).expect("unknown parameter");
        let p = self.store.entry(idx);
        assert_eq!(p.cols, 1, "param() is for vector parameters");
        self.push(p.data.clone(), Op::Param(idx))
    }

    /// Matrix parameter times node: y = W x.
    pub fn matvec(&mut self, name: &str, x: NodeId) -> NodeId {
        let idx = self.store.index_of(name).expect("unknown parameter");
        let p = self.store.entry(idx);
        let xv = &self.nodes[x].value;
        assert_eq!(p.cols, xv.len(), "matvec dimension mismatch for {name}");
        let mut y = vec![0.0; p.rows];
        for r in 0..p.rows {
            let row = &p.data[r * p.cols..(r + 1) * p.cols];
            y[r] = row.iter().zip(xv.iter()).map(|(a, b)| a * b).sum();
        }
        self.push(y, Op::MatVec(idx, x))
    }

    /// Row `row` of a matrix parameter; gradient flows into that row only.
    pub fn row(&mut self, name: &str, row: usize) -> NodeId {
        let idx = self.store.index_of(name).expect("unknown parameter");
        let p = self.store.entry(idx);
        assert!(row < p.rows, "row {row} out of range for {name}");
        let v = p.data[row * p.cols..(row + 1) * p.cols].to_vec();
        self.push(v, Op::Row(idx, row))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a]
            .value
            .iter()
            .zip(self.nodes[b].value.iter())
            .map(|(x, y)| x + y)
            .collect();
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len());
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len());
        let v: Vec<f64> = self.nodes[a]
            .value
            .iter()
            .zip(self.nodes[b].value.iter())
            .map(|(x, y)| x * y)
            .collect();
        self.push(v, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a]
            .value
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v: Vec<f64> = self.nodes[a].value.iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.nodes[a].value.clone();
        v.extend_from_slice(&self.nodes[b].value);
        self.push(v, Op::Concat(a, b))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a].value[start..start + len].to_vec();
        self.push(v, Op::Slice(a, start, len))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.nodes[a].value.len(), self.nodes[b].value.len());
        let v: f64 = self.nodes[a]
            .value
            .iter()
            .zip(self.nodes[b].value.iter())
            .map(|(x, y)| x * y)
            .sum();
        self.push(vec![v], Op::Dot(a, b))
    }

    pub fn stack(&mut self, parts: Vec<NodeId>) -> NodeId {
        let v: Vec<f64> = parts
            .iter()
            .map(|&p| {
                debug_assert_eq!(self.nodes[p].value.len(), 1);
                self.nodes[p].value[0]
            })
            .collect();
        self.push(v, Op::Stack(parts))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let v: Vec<f64> = exps.iter().map(|e| e / z).collect();
        self.push(v, Op::Softmax(a))
    }

    pub fn scale_by(&mut self, vec: NodeId, scalar: NodeId) -> NodeId {
        debug_assert_eq!(self.nodes[scalar].value.len(), 1);
        let s = self.nodes[scalar].value[0];
        let v: Vec<f64> = self.nodes[vec].value.iter().map(|x| x * s).collect();
        self.push(v, Op::ScaleBy(vec, scalar))
    }

    pub fn scale_const(&mut self, a: NodeId, s: f64) -> NodeId {
        let v: Vec<f64> = self.nodes[a].value.iter().map(|x| x * s).collect();
        self.push(v, Op::ScaleConst(a, s))
    }

    pub fn sum_all(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty());
        let len = self.nodes[parts[0]].value.len();
        let mut v = vec![0.0; len];
        for &p in &parts {
            assert_eq!(self.nodes[p].value.len(), len);
            for (o, x) in v.iter_mut().zip(self.nodes[p].value.iter()) {
                *o += x;
            }
        }
        self.push(v, Op::SumAll(parts))
    }

    /// Cross entropy of one softmax step, computed stably from logits.
    pub fn nll_from_logits(&mut self, logits: NodeId, target: usize) -> NodeId {
        let x = &self.nodes[logits].value;
        assert!(target < x.len());
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let v = lse - x[target];
        self.push(vec![v], Op::NllFromLogits(logits, target))
    }

    /// Log probabilities for decoding (no gradient needed downstream, but
    /// built from the same stable computation).
    pub fn log_softmax_values(&self, logits: NodeId) -> Vec<f64> {
        let x = &self.nodes[logits].value;
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        x.iter().map(|v| v - lse).collect()
    }

    /// Backpropagate from a scalar node; returns parameter gradients.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.nodes[loss].value.len(), 1, "loss must be scalar");
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        node_grads[loss] = Some(vec![1.0]);
        let mut grads = Gradients::zeros(self.store);

        let add_to = |slot: &mut Option<Vec<f64>>, len: usize, f: &mut dyn FnMut(&mut [f64])| {
            let g = slot.get_or_insert_with(|| vec![0.0; len]);
            f(g);
        };

        for id in (0..=loss).rev() {
            let up = match node_grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(idx) => {
                    for (o, g) in grads.by_entry[*idx].iter_mut().zip(up.iter()) {
                        *o += g;
                    }
                }
                Op::Row(idx, row) => {
                    let p = self.store.entry(*idx);
                    let base = row * p.cols;
                    for (k, g) in up.iter().enumerate() {
                        grads.by_entry[*idx][base + k] += g;
                    }
                }
                Op::MatVec(idx, x) => {
                    let p = self.store.entry(*idx);
                    let xv = self.nodes[*x].value.clone();
                    // dW[r][c] += up[r] * x[c]
                    let gw = &mut grads.by_entry[*idx];
                    for r in 0..p.rows {
                        for c in 0..p.cols {
                            gw[r * p.cols + c] += up[r] * xv[c];
                        }
                    }
                    add_to(&mut node_grads[*x], xv.len(), &mut |g| {
                        for c in 0..p.cols {
                            let mut acc = 0.0;
                            for r in 0..p.rows {
                                acc += p.data[r * p.cols + c] * up[r];
                            }
                            g[c] += acc;
                        }
                    });
                }
                Op::Add(a, b) => {
                    let len = up.len();
                    add_to(&mut node_grads[*a], len, &mut |g| {
                        for (x, u) in g.iter_mut().zip(up.iter()) {
                            *x += u;
                        }
                    });
                    add_to(&mut node_grads[*b], len, &mut |g| {
                        for (x, u) in g.iter_mut().zip(up.iter()) {
                            *x += u;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    add_to(&mut node_grads[*a], av.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * bv[i];
                        }
                    });
                    add_to(&mut node_grads[*b], bv.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * av[i];
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let yv = self.nodes[id].value.clone();
                    add_to(&mut node_grads[*a], yv.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * yv[i] * (1.0 - yv[i]);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let yv = self.nodes[id].value.clone();
                    add_to(&mut node_grads[*a], yv.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * (1.0 - yv[i] * yv[i]);
                        }
                    });
                }
                Op::Concat(a, b) => {
                    let alen = self.nodes[*a].value.len();
                    let blen = self.nodes[*b].value.len();
                    add_to(&mut node_grads[*a], alen, &mut |g| {
                        for i in 0..alen {
                            g[i] += up[i];
                        }
                    });
                    add_to(&mut node_grads[*b], blen, &mut |g| {
                        for i in 0..blen {
                            g[i] += up[alen + i];
                        }
                    });
                }
                Op::Slice(a, start, len) => {
                    let alen = self.nodes[*a].value.len();
                    let (start, len) = (*start, *len);
                    add_to(&mut node_grads[*a], alen, &mut |g| {
                        for i in 0..len {
                            g[start + i] += up[i];
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let av = self.nodes[*a].value.clone();
                    let bv = self.nodes[*b].value.clone();
                    let u = up[0];
                    add_to(&mut node_grads[*a], av.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += u * bv[i];
                        }
                    });
                    add_to(&mut node_grads[*b], bv.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += u * av[i];
                        }
                    });
                }
                Op::Stack(parts) => {
                    for (i, &p) in parts.iter().enumerate() {
                        let u = up[i];
                        add_to(&mut node_grads[p], 1, &mut |g| {
                            g[0] += u;
                        });
                    }
                }
                Op::Softmax(a) => {
                    let s = self.nodes[id].value.clone();
                    let gs: f64 = up.iter().zip(s.iter()).map(|(u, si)| u * si).sum();
                    add_to(&mut node_grads[*a], s.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += s[i] * (up[i] - gs);
                        }
                    });
                }
                Op::ScaleBy(vec, scalar) => {
                    let vv = self.nodes[*vec].value.clone();
                    let s = self.nodes[*scalar].value[0];
                    add_to(&mut node_grads[*vec], vv.len(), &mut |g| {
                        for i in 0..g.len() {
                            g[i] += up[i] * s;
                        }
                    });
                    let ds: f64 = up.iter().zip(vv.iter()).map(|(u, v)| u * v).sum();
                    add_to(&mut node_grads[*scalar], 1, &mut |g| {
                        g[0] += ds;
                    });
                }
                Op::ScaleConst(a, s) => {
                    let len = up.len();
                    let s = *s;
                    add_to(&mut node_grads[*a], len, &mut |g| {
                        for i in 0..len {
                            g[i] += up[i] * s;
                        }
                    });
                }
                Op::SumAll(parts) => {
                    for &p in parts {
                        add_to(&mut node_grads[p], up.len(), &mut |g| {
                            for (x, u) in g.iter_mut().zip(up.iter()) {
                                *x += u;
                            }
                        });
                    }
                }
                Op::NllFromLogits(a, target) => {
                    let x = self.nodes[*a].value.clone();
                    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let u = up[0];
                    let target = *target;
                    add_to(&mut node_grads[*a], x.len(), &mut |g| {
                        for i in 0..g.len() {
                            let p = exps[i] / z;
                            g[i] += u * (p - if i == target { 1.0 } else { 0.0 });
                        }
                    });
                }
            }
        }
        grads
    }
}

/// Central-difference check of d(loss)/d(param) for every parameter entry,
/// against the analytic backward pass. Returns the worst relative error.
pub fn max_rel_error<F>(store: &mut ParamStore, build: F, eps: f64) -> f64
where
    F: Fn(&mut Tape) -> NodeId,
{
    let grads = {
        let mut tape = Tape::new(store);
        let loss = build(&mut tape);
        tape.backward(loss)
    };
    let mut worst = 0.0f64;
    for idx in 0..store.len() {
        for k in 0..store.entry(idx).data.len() {
            let orig = store.entry(idx).data[k];
            store.entry_mut(idx).data[k] = orig + eps;
            let fp = {
                let mut tape = Tape::new(store);
                let l = build(&mut tape);
                tape.scalar(l)
            };
            store.entry_mut(idx).data[k] = orig - eps;
            let fm = {
                let mut tape = Tape::new(store);
                let l = build(&mut tape);
                tape.scalar(l)
            };
            store.entry_mut(idx).data[k] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let analytic = grads.by_entry[idx][k];
            let denom = numeric.abs().max(analytic.abs()).max(1.0);
            worst = worst.max((numeric - analytic).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::params::{Param, ParamStore};
    use super::*;

    fn store_with(entries: &[(&str, usize, usize, &[f64])]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, rows, cols, data) in entries {
            s.insert(
                name,
                Param {
                    data: data.to_vec(),
                    rows: *rows,
                    cols: *cols,
                },
            );
        }
        s
    }

    #[test]
    fn matvec_add_sigmoid_chain() {
        let mut store = store_with(&[
            ("w", 2, 3, &[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]),
            ("b", 2, 1, &[0.05, -0.1]),
        ]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let x = t.input(vec![1.0, -2.0, 0.5]);
                let wx = t.matvec("w", x);
                let b = t.param("b");
                let z = t.add(wx, b);
                let y = t.sigmoid(z);
                let ones = t.input(vec![1.0, 1.0]);
                t.dot(y, ones)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn tanh_mul_concat_slice() {
        let mut store = store_with(&[("v", 4, 1, &[0.2, -0.3, 0.4, 0.1])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let v = t.param("v");
                let a = t.slice(v, 0, 2);
                let b = t.slice(v, 2, 2);
                let m = t.mul(a, b);
                let th = t.tanh(m);
                let cat = t.concat(th, m);
                let w = t.input(vec![0.7, -0.4, 0.2, 1.1]);
                t.dot(cat, w)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn softmax_stack_scale_by() {
        let mut store = store_with(&[("v", 3, 1, &[0.5, -0.2, 0.8])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let v = t.param("v");
                let a = t.slice(v, 0, 1);
                let b = t.slice(v, 1, 1);
                let c = t.slice(v, 2, 1);
                let scores = t.stack(vec![a, b, c]);
                let probs = t.softmax(scores);
                let p0 = t.slice(probs, 0, 1);
                let scaled = t.scale_by(v, p0);
                let w = t.input(vec![1.0, 2.0, -1.0]);
                t.dot(scaled, w)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn embedding_row_gradient_hits_only_that_row() {
        let mut store = store_with(&[("e", 3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let r = t.row("e", 1);
                let th = t.tanh(r);
                let w = t.input(vec![1.0, -2.0]);
                t.dot(th, w)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
        let mut tape = Tape::new(&store);
        let r = tape.row("e", 1);
        let w = tape.input(vec![1.0, 1.0]);
        let loss = tape.dot(r, w);
        let grads = tape.backward(loss);
        assert_eq!(grads.by_entry[0], vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn nll_from_logits_gradient() {
        let mut store = store_with(&[("logits", 4, 1, &[0.3, -1.2, 2.0, 0.1])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let l = t.param("logits");
                t.nll_from_logits(l, 2)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn nll_matches_manual_cross_entropy() {
        let store = store_with(&[("logits", 3, 1, &[1.0, 2.0, 3.0])]);
        let mut tape = Tape::new(&store);
        let l = tape.param("logits");
        let nll = tape.nll_from_logits(l, 0);
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        let expected = -( (1.0f64).exp() / z ).ln();
        assert!((tape.scalar(nll) - expected).abs() < 1e-12);
    }

    #[test]
    fn sum_all_and_scale_const() {
        let mut store = store_with(&[("v", 2, 1, &[0.4, -0.7])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let v = t.param("v");
                let s = t.sum_all(vec![v, v, v]);
                let sc = t.scale_const(s, 0.25);
                let ones = t.input(vec![1.0, 1.0]);
                t.dot(sc, ones)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // v used along two paths; the gradient must sum both contributions
        let mut store = store_with(&[("v", 2, 1, &[0.3, 0.9])]);
        let err = max_rel_error(
            &mut store,
            |t| {
                let v = t.param("v");
                let sq = t.mul(v, v);
                let th = t.tanh(v);
                let s = t.add(sq, th);
                let ones = t.input(vec![1.0, 1.0]);
                t.dot(s, ones)
            },
            1e-6,
        );
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn inputs_receive_no_parameter_gradient() {
        let store = store_with(&[("v", 2, 1, &[0.3, 0.9])]);
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![5.0, -1.0]);
        let y = tape.tanh(x);
        let ones = tape.input(vec![1.0, 1.0]);
        let loss = tape.dot(y, ones);
        let grads = tape.backward(loss);
        assert!(grads.by_entry[0].iter().all(|&g| g == 0.0));
    }
}
