/// One-hot encoding of a state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    n: usize,
}

impl OneHot {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "one-hot width must be positive");
        Self { n }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn write(&self, state: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[state] = 1.0;
    }

    pub fn encode(&self, state: usize) -> alloc::vec::Vec<f64> {
        let mut v = alloc::vec![0.0; self.n];
        self.write(state, &mut v);
        v
    }
}
