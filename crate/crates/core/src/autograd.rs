//! Minimal define-by-run reverse-mode automatic differentiation over dense
//! `f64` matrices.
//!
//! Every model in this crate builds its forward computation on a [`Graph`],
//! which records each operation. [`Graph::backward`] then walks the tape in
//! reverse and produces gradients for every recorded node, including the
//! parameter leaves owned by a [`ParamSet`].
//!
//! All values are two-dimensional. Row vectors (`1 x d`) represent single
//! states; sequences are stacked row-wise (`n x d`). Binary elementwise
//! operations broadcast along any axis of length one.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;

/// Handle to a named parameter tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    value: Mat,
}

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    #[serde(skip)]
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name) && !self.entries.iter().any(|e| e.name == name),
            "duplicate parameter name {name}"
        );
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, value });
        ParamId(id)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        if let Some(&i) = self.by_name.get(name) {
            return Some(ParamId(i));
        }
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.by_name = self.entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
    }

    /// True when both sets hold the same names with the same shapes.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.name == b.name && a.value.dim() == b.value.dim())
    }

    pub fn l2_norms(&self) -> Vec<(String, f64)> {
        self.entries.iter().map(|e| (e.name.clone(), e.value.iter().map(|x| x * x).sum::<f64>().sqrt())).collect()
    }
}

/// Per-parameter gradients, aligned with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<Mat>>,
}

impl ParamGrads {
    pub fn empty(len: usize) -> Self {
        Self { grads: vec![None; len] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for `id`, or zeros shaped like the parameter.
    pub fn dense(&self, params: &ParamSet, id: ParamId) -> Mat {
        self.grads[id.0].clone().unwrap_or_else(|| Mat::zeros(params.get(id).dim()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }

    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => *m += t,
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * k);
        }
    }

    /// Clamps every component into `[-limit, limit]`.
    pub fn clip(&mut self, limit: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x.clamp(-limit, limit));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flatten().flat_map(|g| g.iter()).fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    /// `ln(max(x, floor))`; zero gradient below the floor.
    ClampLog(usize, f64),
    SoftmaxRows(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
    Transpose(usize),
    Sum(usize),
    /// Row-wise max over columns, with the winning column per row.
    MaxCols(usize, Vec<usize>),
    /// Max over consecutive groups of rows, with winning row per output cell.
    GroupMaxRows(usize, Vec<usize>),
    /// `out[r, idx[j]] += x[r, j]`.
    ScatterCols(usize, Vec<usize>),
    /// Sliding windows of `width` rows inside blocks of `block` rows.
    Windows {
        src: usize,
        block: usize,
        width: usize,
    },
    Pick(usize, usize, usize),
}

struct Node {
    value: Rc<Mat>,
    op: Op,
}

/// A recording of one forward computation.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: RefCell<Vec<Node>>,
    param_nodes: RefCell<HashMap<usize, usize>>,
}

/// A value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph<'g>,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = self.value();
        write!(f, "Var#{}{:?}", self.id, v.dim())
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("incompatible shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

/// Sums `grad` down to `shape` along broadcast axes.
fn reduce_to(grad: &Mat, shape: (usize, usize)) -> Mat {
    let mut g = grad.clone();
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, nodes: RefCell::new(Vec::with_capacity(1024)), param_nodes: RefCell::new(HashMap::new()) }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> usize {
        self.push_rc(Rc::new(value), op)
    }

    fn push_rc(&self, value: Rc<Mat>, op: Op) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        nodes.len() - 1
    }

    fn val(&self, id: usize) -> Rc<Mat> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Runs the reverse sweep from a `1 x 1` scalar.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].value.dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Mat::ones((1, 1)));

        fn acc(grads: &mut [Option<Mat>], id: usize, g: Mat) {
            match &mut grads[id] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        let mut params = ParamGrads::empty(self.params.len());
        let mut leaves: HashMap<usize, Mat> = HashMap::new();
        for i in (0..=loss.id).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {
                    leaves.insert(i, gout);
                }
                Op::Param(p) => {
                    params.grads[*p] = Some(gout);
                }
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    acc(&mut grads, *a, gout.dot(&bv.t()));
                    acc(&mut grads, *b, av.t().dot(&gout));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, reduce_to(&gout, nodes[*a].value.dim()));
                    acc(&mut grads, *b, reduce_to(&gout, nodes[*b].value.dim()));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, reduce_to(&gout, nodes[*a].value.dim()));
                    let gb = reduce_to(&gout, nodes[*b].value.dim());
                    acc(&mut grads, *b, -gb);
                }
                Op::Mul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let ga = &gout * &**bv;
                    let gb = &gout * &**av;
                    acc(&mut grads, *a, reduce_to(&ga, av.dim()));
                    acc(&mut grads, *b, reduce_to(&gb, bv.dim()));
                }
                Op::Scale(a, k) => acc(&mut grads, *a, gout.mapv(|g| g * k)),
                Op::AddScalar(a) => acc(&mut grads, *a, gout),
                Op::Sigmoid(a) => {
                    let g = &gout * &y.mapv(|s| s * (1.0 - s));
                    acc(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let g = &gout * &y.mapv(|t| 1.0 - t * t);
                    acc(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let mut g = gout;
                    g.zip_mut_with(&nodes[*a].value, |g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    acc(&mut grads, *a, g);
                }
                Op::Exp(a) => acc(&mut grads, *a, &gout * &**y),
                Op::ClampLog(a, floor) => {
                    let mut g = gout;
                    g.zip_mut_with(&nodes[*a].value, |g, &x| *g = if x > *floor { *g / x } else { 0.0 });
                    acc(&mut grads, *a, g);
                }
                Op::SoftmaxRows(a) => {
                    let mut g = &gout * &**y;
                    for (mut row, yrow) in g.rows_mut().into_iter().zip(y.rows()) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |r, &yv| *r -= dot * yv);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = nodes[p].value.ncols();
                        acc(&mut grads, p, gout.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = nodes[p].value.nrows();
                        acc(&mut grads, p, gout.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut g = Mat::zeros(nodes[*a].value.dim());
                    g.slice_mut(s![.., *start..*end]).assign(&gout);
                    acc(&mut grads, *a, g);
                }
                Op::GatherRows(a, idx) => {
                    let mut g = Mat::zeros(nodes[*a].value.dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut row = g.row_mut(src);
                        row += &gout.row(r);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Transpose(a) => acc(&mut grads, *a, gout.t().to_owned()),
                Op::Sum(a) => {
                    let g = Mat::from_elem(nodes[*a].value.dim(), gout[[0, 0]]);
                    acc(&mut grads, *a, g);
                }
                Op::MaxCols(a, arg) => {
                    let mut g = Mat::zeros(nodes[*a].value.dim());
                    for (r, &c) in arg.iter().enumerate() {
                        g[[r, c]] = gout[[r, 0]];
                    }
                    acc(&mut grads, *a, g);
                }
                Op::GroupMaxRows(a, arg) => {
                    let mut g = Mat::zeros(nodes[*a].value.dim());
                    let cols = y.ncols();
                    for (k, &src_row) in arg.iter().enumerate() {
                        let (r, c) = (k / cols, k % cols);
                        g[[src_row, c]] += gout[[r, c]];
                    }
                    acc(&mut grads, *a, g);
                }
                Op::ScatterCols(a, idx) => {
                    let av = &nodes[*a].value;
                    let mut g = Mat::zeros(av.dim());
                    for r in 0..av.nrows() {
                        for (j, &c) in idx.iter().enumerate() {
                            g[[r, j]] = gout[[r, c]];
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Windows { src, block, width } => {
                    let xv = &nodes[*src].value;
                    let d = xv.ncols();
                    let per_block = block - width + 1;
                    let mut g = Mat::zeros(xv.dim());
                    for r in 0..gout.nrows() {
                        let (b, off) = (r / per_block, r % per_block);
                        for k in 0..*width {
                            let src_row = b * block + off + k;
                            let mut row = g.row_mut(src_row);
                            row += &gout.slice(s![r, k * d..(k + 1) * d]);
                        }
                    }
                    acc(&mut grads, *src, g);
                }
                Op::Pick(a, r, c) => {
                    let mut g = Mat::zeros(nodes[*a].value.dim());
                    g[[*r, *c]] = gout[[0, 0]];
                    acc(&mut grads, *a, g);
                }
            }
        }
        Gradients { leaves, params }
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    leaves: HashMap<usize, Mat>,
    params: ParamGrads,
}

impl Gradients {
    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }

    /// Gradient with respect to a constant leaf, if it was reached.
    pub fn leaf(&self, var: Var<'_>) -> Option<&Mat> {
        self.leaves.get(&var.id)
    }
}

impl<'p> Graph<'p> {
    /// Records a constant input.
    pub fn constant(&self, value: Mat) -> Var<'_> {
        Var { graph: self.cast(), id: self.push(value, Op::Leaf) }
    }

    /// Records a shared constant without copying it.
    pub fn constant_rc(&self, value: Rc<Mat>) -> Var<'_> {
        Var { graph: self.cast(), id: self.push_rc(value, Op::Leaf) }
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.constant(Mat::from_elem((1, 1), x))
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.constant(Mat::zeros((rows, cols)))
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&self, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.param_nodes.borrow().get(&id.0) {
            return Var { graph: self.cast(), id: node };
        }
        let value = self.params.get(id).clone();
        let node = self.push(value, Op::Param(id.0));
        self.param_nodes.borrow_mut().insert(id.0, node);
        Var { graph: self.cast(), id: node }
    }

    /// Embedding lookup: rows of a parameter table.
    pub fn lookup(&self, table: ParamId, ids: &[usize]) -> Var<'_> {
        self.param(table).rows(ids)
    }

    pub fn concat_cols<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        assert!(!parts.is_empty());
        let views: Vec<Rc<Mat>> = parts.iter().map(|p| self.val(p.id)).collect();
        let rows = views[0].nrows();
        let cols: usize = views.iter().map(|v| v.ncols()).sum();
        let mut out = Mat::zeros((rows, cols));
        let mut start = 0;
        for v in &views {
            assert_eq!(v.nrows(), rows, "concat_cols row mismatch");
            out.slice_mut(s![.., start..start + v.ncols()]).assign(v);
            start += v.ncols();
        }
        let id = self.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()));
        Var { graph: self.cast(), id }
    }

    pub fn concat_rows<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        assert!(!parts.is_empty());
        let views: Vec<Rc<Mat>> = parts.iter().map(|p| self.val(p.id)).collect();
        let cols = views[0].ncols();
        let rows: usize = views.iter().map(|v| v.nrows()).sum();
        let mut out = Mat::zeros((rows, cols));
        let mut start = 0;
        for v in &views {
            assert_eq!(v.ncols(), cols, "concat_rows column mismatch");
            out.slice_mut(s![start..start + v.nrows(), ..]).assign(v);
            start += v.nrows();
        }
        let id = self.push(out, Op::ConcatRows(parts.iter().map(|p| p.id).collect()));
        Var { graph: self.cast(), id }
    }

    // Graph<'p> is covariant in 'p, so a shared borrow can be viewed at the
    // shorter lifetime.
    fn cast(&self) -> &Graph<'_> {
        self
    }
}

impl<'g> Var<'g> {
    fn unary(self, value: Mat, op: Op) -> Var<'g> {
        Var { graph: self.graph, id: self.graph.push(value, op) }
    }

    pub fn id(self) -> usize {
        self.id
    }

    pub fn graph(self) -> &'g Graph<'g> {
        self.graph
    }

    pub fn value(&self) -> Rc<Mat> {
        self.graph.val(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    /// The single entry of a `1 x 1` value.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "item() on non-scalar");
        v[[0, 0]]
    }

    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        let v = self.value().dot(&*other.value());
        self.unary(v, Op::MatMul(self.id, other.id))
    }

    pub fn add(self, other: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), other.value());
        let _ = broadcast_shape(a.dim(), b.dim());
        let v = &*a + &*b;
        self.unary(v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), other.value());
        let _ = broadcast_shape(a.dim(), b.dim());
        let v = &*a - &*b;
        self.unary(v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), other.value());
        let _ = broadcast_shape(a.dim(), b.dim());
        let v = &*a * &*b;
        self.unary(v, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, k: f64) -> Var<'g> {
        let v = self.value().mapv(|x| x * k);
        self.unary(v, Op::Scale(self.id, k))
    }

    pub fn add_scalar(self, k: f64) -> Var<'g> {
        let v = self.value().mapv(|x| x + k);
        self.unary(v, Op::AddScalar(self.id))
    }

    /// `1 - x`.
    pub fn one_minus(self) -> Var<'g> {
        self.scale(-1.0).add_scalar(1.0)
    }

    pub fn sigmoid(self) -> Var<'g> {
        let v = self.value().mapv(sigmoid);
        self.unary(v, Op::Sigmoid(self.id))
    }

    pub fn tanh(self) -> Var<'g> {
        let v = self.value().mapv(f64::tanh);
        self.unary(v, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        let v = self.value().mapv(|x| if x < 0.0 { 0.0 } else { x });
        self.unary(v, Op::Relu(self.id))
    }

    pub fn exp(self) -> Var<'g> {
        let v = self.value().mapv(f64::exp);
        self.unary(v, Op::Exp(self.id))
    }

    /// Natural log of `max(x, floor)`.
    pub fn clamp_log(self, floor: f64) -> Var<'g> {
        // `f64::max` would swallow NaN and hide a diverged forward pass.
        let v = self.value().mapv(|x| if x.is_nan() { x } else { x.max(floor).ln() });
        self.unary(v, Op::ClampLog(self.id, floor))
    }

    pub fn softmax_rows(self) -> Var<'g> {
        let v = softmax_rows(&self.value());
        self.unary(v, Op::SoftmaxRows(self.id))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'g> {
        let v = self.value().slice(s![.., start..end]).to_owned();
        self.unary(v, Op::SliceCols(self.id, start, end))
    }

    /// Gathers rows by index; indices may repeat.
    pub fn rows(self, idx: &[usize]) -> Var<'g> {
        let src = self.value();
        let mut out = Mat::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&src.row(i));
        }
        self.unary(out, Op::GatherRows(self.id, idx.to_vec()))
    }

    pub fn row(self, i: usize) -> Var<'g> {
        self.rows(&[i])
    }

    pub fn t(self) -> Var<'g> {
        let v = self.value().t().to_owned();
        self.unary(v, Op::Transpose(self.id))
    }

    pub fn sum(self) -> Var<'g> {
        let v = Mat::from_elem((1, 1), self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn max_cols(self) -> Var<'g> {
        let src = self.value();
        let mut out = Mat::zeros((src.nrows(), 1));
        let mut arg = Vec::with_capacity(src.nrows());
        for (r, row) in src.rows().into_iter().enumerate() {
            let (best, val) =
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) });
            out[[r, 0]] = val;
            arg.push(best);
        }
        self.unary(out, Op::MaxCols(self.id, arg))
    }

    /// Column-wise max over each consecutive block of `group` rows.
    pub fn group_max_rows(self, group: usize) -> Var<'g> {
        let src = self.value();
        assert!(group > 0 && src.nrows().is_multiple_of(group), "rows must divide into groups");
        let groups = src.nrows() / group;
        let cols = src.ncols();
        let mut out = Mat::from_elem((groups, cols), f64::NEG_INFINITY);
        let mut arg = vec![0usize; groups * cols];
        for gidx in 0..groups {
            for r in gidx * group..(gidx + 1) * group {
                for c in 0..cols {
                    if src[[r, c]] > out[[gidx, c]] {
                        out[[gidx, c]] = src[[r, c]];
                        arg[gidx * cols + c] = r;
                    }
                }
            }
        }
        self.unary(out, Op::GroupMaxRows(self.id, arg))
    }

    /// Scatter-adds column `j` into column `idx[j]` of a `width`-wide output.
    pub fn scatter_cols(self, idx: &[usize], width: usize) -> Var<'g> {
        let src = self.value();
        assert_eq!(idx.len(), src.ncols(), "scatter index length");
        let mut out = Mat::zeros((src.nrows(), width));
        for r in 0..src.nrows() {
            for (j, &c) in idx.iter().enumerate() {
                out[[r, c]] += src[[r, j]];
            }
        }
        self.unary(out, Op::ScatterCols(self.id, idx.to_vec()))
    }

    /// For each block of `block` rows, emits every run of `width` consecutive
    /// rows flattened into one row (a "valid" 1-d convolution unfold).
    pub fn windows(self, block: usize, width: usize) -> Var<'g> {
        let src = self.value();
        assert!(width >= 1 && block >= width && src.nrows().is_multiple_of(block));
        let d = src.ncols();
        let per_block = block - width + 1;
        let blocks = src.nrows() / block;
        let mut out = Mat::zeros((blocks * per_block, width * d));
        for b in 0..blocks {
            for off in 0..per_block {
                let r = b * per_block + off;
                for k in 0..width {
                    out.slice_mut(s![r, k * d..(k + 1) * d]).assign(&src.row(b * block + off + k));
                }
            }
        }
        self.unary(out, Op::Windows { src: self.id, block, width })
    }

    pub fn pick(self, r: usize, c: usize) -> Var<'g> {
        let v = Mat::from_elem((1, 1), self.value()[[r, c]]);
        self.unary(v, Op::Pick(self.id, r, c))
    }
}
