use fracsde::Drift;

/// Classical RK4 on `dx = B(x) dt`, halving the step until the Richardson
/// extrapolate moves by less than `tol`.
pub fn ode_oracle(drift: &dyn Drift, x0: f64, t: f64, tol: f64) -> f64 {
    let rk4 = |n: usize| {
        let h = t / n as f64;
        let mut x = x0;
        for _ in 0..n {
            let k1 = drift.value(x);
            let k2 = drift.value(x + 0.5 * h * k1);
            let k3 = drift.value(x + 0.5 * h * k2);
            let k4 = drift.value(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    };
    let mut n = 64;
    let mut coarse = rk4(n);
    loop {
        n *= 2;
        let fine = rk4(n);
        let extrapolated = (16.0 * fine - coarse) / 15.0;
        if (extrapolated - fine).abs() < tol || n > 1 << 22 {
            return extrapolated;
        }
        coarse = fine;
    }
}
