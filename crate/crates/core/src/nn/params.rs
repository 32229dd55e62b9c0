//! Flat views over trainable parameters and their gradient buffers.

/// Anything that owns trainable tensors paired with same-shaped gradient
/// buffers. Visiting order must be stable: optimizers and checkpoints key
/// their state on it.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p, _| n += p.len());
        n
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |p, _| out.extend_from_slice(p));
        out
    }

    fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        self.visit_mut(&mut |p, _| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, g| out.extend_from_slice(g));
        out
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, g| g.fill(0.0));
    }

    fn grad_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.visit(&mut |_, g| sq += g.iter().map(|x| x * x).sum::<f64>());
        sq.sqrt()
    }

    fn grads_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, g| ok &= g.iter().all(|x| x.is_finite()));
        ok
    }

    fn scale_grads(&mut self, factor: f64) {
        self.visit_mut(&mut |_, g| g.iter_mut().for_each(|x| *x *= factor));
    }

    /// Adds `other`'s gradient buffers into ours. Both must share a layout.
    fn add_grads_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flat_grads();
        let mut offset = 0;
        self.visit_mut(&mut |_, g| {
            let n = g.len();
            for (dst, src) in g.iter_mut().zip(&flat[offset..offset + n]) {
                *dst += src;
            }
            offset += n;
        });
        assert_eq!(offset, flat.len(), "gradient layout mismatch");
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_grad_norm<P: Parameterized + ?Sized>(model: &mut P, max_norm: f64) -> f64 {
    let norm = model.grad_norm();
    if norm > max_norm && norm > 0.0 {
        model.scale_grads(max_norm / norm);
    }
    norm
}
