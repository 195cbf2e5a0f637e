//! Constant-velocity Kalman filter over `(cx, cy, area, aspect)`.
//!
//! State is `[cx, cy, s, r, vcx, vcy, vs]`; the aspect ratio `r` has no
//! velocity term. Noise settings are the usual SORT ones.

use nalgebra::{SMatrix, SVector};

use crate::geometry::BBox;

type State = SVector<f64, 7>;
type Cov = SMatrix<f64, 7, 7>;
type Meas = SVector<f64, 4>;

#[derive(Debug, Clone)]
pub struct BoxKalman {
    x: State,
    p: Cov,
}

fn transition() -> Cov {
    let mut f = Cov::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> SMatrix<f64, 4, 7> {
    SMatrix::<f64, 4, 7>::identity()
}

fn process_noise() -> Cov {
    Cov::from_diagonal(&State::from_column_slice(&[
        1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001,
    ]))
}

fn measurement_noise() -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::from_diagonal(&Meas::new(1.0, 1.0, 10.0, 10.0))
}

/// `(cx, cy, area, w/h)`; degenerate heights map to aspect 1.
pub fn box_to_measurement(b: &BBox) -> Meas {
    let (cx, cy) = b.center();
    let (w, h) = (b.width(), b.height());
    let r = if h > 0.0 { w / h } else { 1.0 };
    Meas::new(cx, cy, w * h, r)
}

fn state_to_box(x: &State) -> BBox {
    let s = x[2].max(0.0);
    let r = x[3].max(0.0);
    let w = (s * r).sqrt();
    let h = if w > 0.0 { s / w } else { 0.0 };
    BBox::from_center(x[0], x[1], w, h).unwrap_or_else(|_| {
        BBox::new(0.0, 0.0, 0.0, 0.0).expect("zero box is valid")
    })
}

impl BoxKalman {
    pub fn new(initial: &BBox) -> Self {
        let z = box_to_measurement(initial);
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from(&z);
        let p = Cov::from_diagonal(&State::from_column_slice(&[
            10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4,
        ]));
        Self { x, p }
    }

    /// Advance one frame and return the predicted box.
    pub fn predict(&mut self) -> BBox {
        if self.x[2] + self.x[6] <= 0.0 {
            self.x[6] = 0.0;
        }
        let f = transition();
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + process_noise();
        self.current()
    }

    pub fn update(&mut self, measured: &BBox) {
        let z = box_to_measurement(measured);
        let h = observation();
        let y = z - h * self.x;
        let s = h * self.p * h.transpose() + measurement_noise();
        // S is symmetric positive definite by construction.
        let s_inv = s.try_inverse().expect("innovation covariance is invertible");
        let k = self.p * h.transpose() * s_inv;
        self.x += k * y;
        self.p = (Cov::identity() - k * h) * self.p;
    }

    pub fn current(&self) -> BBox {
        state_to_box(&self.x)
    }

    /// Full state `(cx, cy, s, r, vcx, vcy, vs)`.
    pub fn state(&self) -> [f64; 7] {
        let mut out = [0.0; 7];
        out.copy_from_slice(self.x.as_slice());
        out
    }
}
