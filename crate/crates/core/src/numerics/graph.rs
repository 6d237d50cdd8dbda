use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{axpy, dot, Tensor};
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameter tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param { name: name.into(), value, trainable: true });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Squared L2 norm over trainable parameters.
    pub fn trainable_norm_sq(&self) -> f64 {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.sum_sq()).sum()
    }
}

/// One gradient tensor per parameter of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients { grads: store.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b.data());
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    Sum(Var),
    SumSq(Var),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Windows(Var, usize),
    MaxPoolRows(Var, Vec<usize>),
    Dropout(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    // None for parameters, whose values live in the store.
    value: Option<Tensor>,
    op: Op,
}

/// A tape of primitive applications over a borrowed parameter store.
/// Nodes are appended after their inputs, so the tape is always in
/// topological order and `backward` walks it in reverse.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
}

fn mismatch(op: &'static str, left: &Tensor, right: &Tensor) -> NumericsError {
    NumericsError::ShapeMismatch { op, left: left.shape().to_vec(), right: right.shape().to_vec() }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore, mode: Mode, seed: u64) -> Self {
        Graph { params, nodes: Vec::new(), mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        Var(self.nodes.len() - 1)
    }

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let coef = ta.data()[i * k + p];
                if coef != 0.0 {
                    axpy(coef, tb.row(p), row);
                }
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// `[m,n] x [n] -> [m]`
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NumericsError> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.rank() != 2 || tx.rank() != 1 || tw.shape()[1] != tx.len() {
            return Err(mismatch("matvec", tw, tx));
        }
        let m = tw.shape()[0];
        let out: Vec<f64> = (0..m).map(|i| dot(tw.row(i), tx.data())).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x)))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a length-`n` vector to every row of an `[m,n]` matrix, or to a
    /// length-`n` vector.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = *tx.shape().last().unwrap_or(&0);
        if tb.rank() != 1 || tb.len() != n || tx.rank() == 0 || tx.rank() > 2 {
            return Err(mismatch("add_row", tx, tb));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddRow(x, bias)))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let tx = self.value(x);
        Tensor::new(tx.shape().to_vec(), tx.data().iter().map(|&v| f(v)).collect()).expect("same shape")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.map(x, |v| v * factor);
        self.push(t, Op::Scale(x, factor))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, sigmoid);
        self.push(t, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::tanh);
        self.push(t, Op::Tanh(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let t = self.map(x, |v| v * v);
        self.push(t, Op::Square(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Sum of squared entries, as a scalar.
    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_sq();
        self.push(Tensor::scalar(s), Op::SumSq(x))
    }

    /// Concatenates the flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    /// Stacks equal-length vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, NumericsError> {
        let first = rows.first().ok_or(NumericsError::Empty("stack_rows"))?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(d * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != d {
                return Err(mismatch("stack_rows", self.value(*first), t));
            }
            data.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows.len(), d], data)?;
        Ok(self.push(t, Op::StackRows(rows.to_vec())))
    }

    /// Gathers rows of a `[V,d]` table. The gradient is scatter-added.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(NumericsError::ShapeMismatch { op: "gather", left: tt.shape().to_vec(), right: vec![ids.len()] });
        }
        let (rows, d) = (tt.shape()[0], tt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(NumericsError::IndexOutOfRange { index: id, len: rows });
            }
            data.extend_from_slice(tt.row(id));
        }
        let t = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(t, Op::Gather(table, ids.to_vec())))
    }

    /// Turns `[n,d]` into `[n, k*d]` where row `j` is the concatenation of
    /// rows `j-(k-1)/2 ..= j+(k-1)/2`, zero outside the sequence.
    pub fn windows(&mut self, x: Var, k: usize) -> Result<Var, NumericsError> {
        let tx = self.value(x);
        if tx.rank() != 2 || k.is_multiple_of(2) {
            return Err(NumericsError::ShapeMismatch { op: "windows", left: tx.shape().to_vec(), right: vec![k] });
        }
        let (n, d) = (tx.shape()[0], tx.shape()[1]);
        let half = (k - 1) / 2;
        let mut data = vec![0.0; n * k * d];
        for j in 0..n {
            for o in 0..k {
                let src = j + o;
                if src >= half && src - half < n {
                    let dst = &mut data[(j * k + o) * d..(j * k + o + 1) * d];
                    dst.copy_from_slice(tx.row(src - half));
                }
            }
        }
        let t = Tensor::new(vec![n, k * d], data)?;
        Ok(self.push(t, Op::Windows(x, k)))
    }

    /// Per-column maximum over the rows of `[m,n]`; ties go to the first row.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.shape()[0] == 0 {
            return Err(NumericsError::Empty("max_pool_rows"));
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut best = tx.row(0).to_vec();
        let mut arg = vec![0usize; n];
        for r in 1..m {
            for (c, &v) in tx.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    arg[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::vector(best), Op::MaxPoolRows(x, arg)))
    }

    /// Inverted dropout; the identity in evaluation mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Var {
        if self.mode == Mode::Eval || rate <= 0.0 {
            return x;
        }
        let len = self.value(x).len();
        let mask: Vec<f64> = if rate >= 1.0 {
            vec![0.0; len]
        } else {
            let keep = 1.0 / (1.0 - rate);
            (0..len).map(|_| if self.rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
        };
        let tx = self.value(x);
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Dropout(x, mask))
    }

    /// Reverse-mode sweep from a scalar `loss`. Parameters that do not
    /// influence the loss receive zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NumericsError::NotScalar(lt.shape().to_vec()));
        }
        let mut out = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    {
                        let da = slot(&mut grads, *a, m * k);
                        for r in 0..m {
                            let gr = &g[r * n..(r + 1) * n];
                            for p in 0..k {
                                da[r * k + p] += dot(gr, tb.row(p));
                            }
                        }
                    }
                    let db = slot(&mut grads, *b, k * n);
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let coef = ta.data()[r * k + p];
                            if coef != 0.0 {
                                axpy(coef, gr, &mut db[p * n..(p + 1) * n]);
                            }
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (tw, tx) = (self.value(*w), self.value(*x));
                    let (m, n) = (tw.shape()[0], tw.shape()[1]);
                    {
                        let dw = slot(&mut grads, *w, m * n);
                        for r in 0..m {
                            if g[r] != 0.0 {
                                axpy(g[r], tx.data(), &mut dw[r * n..(r + 1) * n]);
                            }
                        }
                    }
                    let dx = slot(&mut grads, *x, n);
                    for r in 0..m {
                        if g[r] != 0.0 {
                            axpy(g[r], tw.row(r), dx);
                        }
                    }
                }
                Op::Add(a, b) => {
                    axpy(1.0, &g, slot(&mut grads, *a, g.len()));
                    axpy(1.0, &g, slot(&mut grads, *b, g.len()));
                }
                Op::Sub(a, b) => {
                    axpy(1.0, &g, slot(&mut grads, *a, g.len()));
                    axpy(-1.0, &g, slot(&mut grads, *b, g.len()));
                }
                Op::AddRow(x, bias) => {
                    axpy(1.0, &g, slot(&mut grads, *x, g.len()));
                    let n = self.value(*bias).len();
                    let db = slot(&mut grads, *bias, n);
                    for row in g.chunks(n.max(1)) {
                        axpy(1.0, row, db);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    {
                        let da = slot(&mut grads, *a, g.len());
                        for ((d, gi), bi) in da.iter_mut().zip(&g).zip(tb.data()) {
                            *d += gi * bi;
                        }
                    }
                    let db = slot(&mut grads, *b, g.len());
                    for ((d, gi), ai) in db.iter_mut().zip(&g).zip(ta.data()) {
                        *d += gi * ai;
                    }
                }
                Op::Scale(x, factor) => axpy(*factor, &g, slot(&mut grads, *x, g.len())),
                Op::Sigmoid(x) => {
                    let y = node.value.as_ref().expect("value").data();
                    let dx = slot(&mut grads, *x, g.len());
                    for ((d, gi), yi) in dx.iter_mut().zip(&g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(x) => {
                    let y = node.value.as_ref().expect("value").data();
                    let dx = slot(&mut grads, *x, g.len());
                    for ((d, gi), yi) in dx.iter_mut().zip(&g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
                Op::Square(x) => {
                    let tx = self.value(*x);
                    let dx = slot(&mut grads, *x, g.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(&g).zip(tx.data()) {
                        *d += 2.0 * gi * xi;
                    }
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    for d in slot(&mut grads, *x, n).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::SumSq(x) => {
                    let tx = self.value(*x);
                    axpy(2.0 * g[0], tx.data(), slot(&mut grads, *x, tx.len()));
                }
                Op::Concat(parts) | Op::StackRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        axpy(1.0, &g[offset..offset + n], slot(&mut grads, *p, n));
                        offset += n;
                    }
                }
                Op::Gather(table, ids) => {
                    let tt = self.value(*table);
                    let d = tt.shape()[1];
                    let dt = slot(&mut grads, *table, tt.len());
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(1.0, &g[r * d..(r + 1) * d], &mut dt[id * d..(id + 1) * d]);
                    }
                }
                Op::Windows(x, k) => {
                    let tx = self.value(*x);
                    let (n, d) = (tx.shape()[0], tx.shape()[1]);
                    let half = (k - 1) / 2;
                    let dx = slot(&mut grads, *x, n * d);
                    for j in 0..n {
                        for o in 0..*k {
                            let src = j + o;
                            if src >= half && src - half < n {
                                let s = src - half;
                                axpy(1.0, &g[(j * k + o) * d..(j * k + o + 1) * d], &mut dx[s * d..(s + 1) * d]);
                            }
                        }
                    }
                }
                Op::MaxPoolRows(x, arg) => {
                    let tx = self.value(*x);
                    let n = tx.shape()[1];
                    let dx = slot(&mut grads, *x, tx.len());
                    for (c, &r) in arg.iter().enumerate() {
                        dx[r * n + c] += g[c];
                    }
                }
                Op::Dropout(x, mask) => {
                    let dx = slot(&mut grads, *x, g.len());
                    for ((d, gi), m) in dx.iter_mut().zip(&g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
        }
        Ok(out)
    }
}
