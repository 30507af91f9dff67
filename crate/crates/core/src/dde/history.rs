/// Ring buffer holding the optical field and its time derivative on the
/// integration grid over `[t - tau, t]`.
///
/// Storing the derivative next to the field lets the integrator evaluate the
/// delayed field at RK4 half steps by cubic Hermite interpolation between two
/// neighbouring grid points, which keeps the scheme fourth order.
#[derive(Debug, Clone)]
pub struct History {
    slots: Vec<Sample>,
    next: usize,
    fresh: bool,
    /// Slot of the first recorded sample while it is still in the buffer.
    origin: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Sample {
    pub e_re: f64,
    pub e_im: f64,
    pub de_re: f64,
    pub de_im: f64,
}

impl History {
    /// History for a delay of `delay_steps` grid steps, filled with a constant field.
    pub fn constant(delay_steps: usize, e_re: f64, e_im: f64) -> Self {
        let fill = Sample {
            e_re,
            e_im,
            de_re: 0.0,
            de_im: 0.0,
        };
        Self {
            slots: vec![fill; delay_steps + 1],
            next: 0,
            fresh: true,
            origin: None,
        }
    }

    /// Number of grid samples, `tau / dt + 1`.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delay_steps(&self) -> usize {
        self.slots.len() - 1
    }

    /// Field at `t - tau` for the step about to be taken.
    pub fn upcoming_delayed(&self) -> (f64, f64) {
        let s = self.slots[self.lag_slot(0)];
        (s.e_re, s.e_im)
    }

    #[inline]
    fn lag_slot(&self, offset: usize) -> usize {
        // slot `next` receives time t; the one after it holds t - tau.
        let i = self.next + 1 + offset;
        let len = self.slots.len();
        if i >= len {
            i - len
        } else {
            i
        }
    }

    #[inline]
    pub(crate) fn oldest(&self) -> Sample {
        self.slots[self.lag_slot(0)]
    }

    /// Right end of the oldest interval. The first recorded sample is a
    /// kink of the trajectory: seen from the constant initial history its
    /// derivative is zero.
    #[inline]
    pub(crate) fn second_oldest(&self) -> Sample {
        let i = self.lag_slot(1);
        let mut s = self.slots[i];
        if self.origin == Some(i) {
            s.de_re = 0.0;
            s.de_im = 0.0;
        }
        s
    }

    #[inline]
    pub(crate) fn record(&mut self, s: Sample) {
        if self.fresh {
            self.fresh = false;
            self.origin = Some(self.next);
        } else if self.origin == Some(self.next) {
            self.origin = None;
        }
        self.slots[self.next] = s;
    }

    #[inline]
    pub(crate) fn advance(&mut self) {
        self.next += 1;
        if self.next == self.slots.len() {
            self.next = 0;
        }
    }
}
