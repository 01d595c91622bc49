/// Zero-mean, unit-norm Gabor kernel of odd `size`, row-major.
///
/// `theta` is the direction (radians, counter-clockwise from the column
/// axis, rows pointing down) along which the carrier oscillates.
pub fn gabor_kernel(size: usize, wavelength: f64, sigma: f64, aspect_ratio: f64, theta: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let (s, c) = theta.sin_cos();
    let mut k = Vec::with_capacity(size * size);
    for y in -half..=half {
        for x in -half..=half {
            let (x, y) = (x as f64, -(y as f64));
            let xr = x * c + y * s;
            let yr = -x * s + y * c;
            let env = (-(xr * xr + aspect_ratio * aspect_ratio * yr * yr) / (2.0 * sigma * sigma)).exp();
            k.push(env * (2.0 * std::f64::consts::PI * xr / wavelength).cos());
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        k.iter_mut().for_each(|v| *v /= norm);
    }
    k
}
