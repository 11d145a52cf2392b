//! Independent reference implementations used by the integration and
//! acceptance suites. Deliberately naive: padded copies, dense inverses,
//! bit-at-a-time CRC, exhaustive enumeration.
#![allow(dead_code)]

use posefuse::ingest::{ImuSample, SensorFrame};
use posefuse::tensor::{Activation, PoolMode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::None => v,
    }
}

/// Zero-pads into a fresh buffer, then slides the kernel with six nested
/// loops per output element.
pub fn naive_conv3d(
    x: &Tensor,
    k: &Tensor,
    bias: &[f64],
    stride: [usize; 3],
    pad: [usize; 3],
    a: Activation,
) -> Tensor {
    let s = x.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let ks = k.shape();
    let (o, kt, kh, kw) = (ks[0], ks[2], ks[3], ks[4]);
    let (pt, ph, pw) = (t + 2 * pad[0], h + 2 * pad[1], w + 2 * pad[2]);
    let mut padded = vec![0.0; c * pt * ph * pw];
    for ci in 0..c {
        for ti in 0..t {
            for hi in 0..h {
                for wi in 0..w {
                    padded[((ci * pt + ti + pad[0]) * ph + hi + pad[1]) * pw + wi + pad[2]] =
                        x.data()[((ci * t + ti) * h + hi) * w + wi];
                }
            }
        }
    }
    let ot = (pt - kt) / stride[0] + 1;
    let oh = (ph - kh) / stride[1] + 1;
    let ow = (pw - kw) / stride[2] + 1;
    let mut out = vec![0.0; o * ot * oh * ow];
    for oc in 0..o {
        for a_t in 0..ot {
            for a_h in 0..oh {
                for a_w in 0..ow {
                    let mut acc = bias[oc];
                    for ci in 0..c {
                        for dt in 0..kt {
                            for dh in 0..kh {
                                for dw in 0..kw {
                                    let xv = padded[((ci * pt + a_t * stride[0] + dt) * ph
                                        + a_h * stride[1]
                                        + dh)
                                        * pw
                                        + a_w * stride[2]
                                        + dw];
                                    let kv = k.data()[(((oc * c + ci) * kt + dt) * kh + dh) * kw + dw];
                                    acc += xv * kv;
                                }
                            }
                        }
                    }
                    out[((oc * ot + a_t) * oh + a_h) * ow + a_w] = act(a, acc);
                }
            }
        }
    }
    Tensor::new(vec![o, ot, oh, ow], out).unwrap()
}

pub fn naive_pool3d(x: &Tensor, mode: PoolMode, win: [usize; 3], stride: [usize; 3]) -> Tensor {
    let s = x.shape();
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    let ot = (t - win[0]) / stride[0] + 1;
    let oh = (h - win[1]) / stride[1] + 1;
    let ow = (w - win[2]) / stride[2] + 1;
    let mut out = Vec::with_capacity(c * ot * oh * ow);
    for ci in 0..c {
        for a_t in 0..ot {
            for a_h in 0..oh {
                for a_w in 0..ow {
                    let mut vals = Vec::new();
                    for dt in 0..win[0] {
                        for dh in 0..win[1] {
                            for dw in 0..win[2] {
                                let (ti, hi, wi) = (a_t * stride[0] + dt, a_h * stride[1] + dh, a_w * stride[2] + dw);
                                vals.push(x.data()[((ci * t + ti) * h + hi) * w + wi]);
                            }
                        }
                    }
                    out.push(match mode {
                        PoolMode::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        PoolMode::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                    });
                }
            }
        }
    }
    Tensor::new(vec![c, ot, oh, ow], out).unwrap()
}

/// Double-double value `hi + lo`, about 32 significant digits. Keeps the
/// dense-inverse oracle accurate on the ill-conditioned Gram matrices that
/// random designs produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd(pub f64, pub f64);

impl Dd {
    fn renorm(s: f64, e: f64) -> Dd {
        let hi = s + e;
        Dd(hi, e - (hi - s))
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = self.0 + o.0;
        let bb = s - self.0;
        let err = (self.0 - (s - bb)) + (o.0 - bb);
        Dd::renorm(s, err + self.1 + o.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let err = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        Dd::renorm(p, err)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd(q1, 0.0)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd(q2, 0.0)));
        let q3 = r.0 / o.0;
        Dd::renorm(q1, q2).add(Dd(q3, 0.0))
    }

    pub fn abs(self) -> Dd {
        if self.0 < 0.0 {
            self.neg()
        } else {
            self
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting, in double-double.
pub fn dense_inverse_dd(a: &[Vec<f64>]) -> Vec<Vec<Dd>> {
    let n = a.len();
    let zero = Dd(0.0, 0.0);
    let mut m: Vec<Vec<Dd>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row: Vec<Dd> = r.iter().map(|&v| Dd(v, 0.0)).collect();
            row.extend((0..n).map(|j| Dd(if i == j { 1.0 } else { 0.0 }, 0.0)));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().0.total_cmp(&m[y][col].abs().0)).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v = v.div(p);
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != zero {
                    for j in 0..2 * n {
                        m[r][j] = m[r][j].sub(f.mul(m[col][j]));
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    dense_inverse_dd(a).into_iter().map(|r| r.into_iter().map(|v| v.0).collect()).collect()
}

pub fn se_kernel(a: &[f64], b: &[f64], ell: f64, sf2: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sf2 * (-d2 / (2.0 * ell * ell)).exp()
}

/// Posterior mean and variance from an explicit inverse of `K + diag I`.
pub fn dense_posterior(xs: &[Vec<f64>], ys: &[f64], q: &[f64], ell: f64, sf2: f64, diag: f64) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, sf2);
    }
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| se_kernel(&xs[i], &xs[j], ell, sf2) + if i == j { diag } else { 0.0 }).collect())
        .collect();
    let inv = dense_inverse_dd(&k);
    let kx: Vec<Dd> = xs.iter().map(|x| Dd(se_kernel(q, x, ell, sf2), 0.0)).collect();
    let mut mu = Dd(0.0, 0.0);
    let mut quad = Dd(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let w = kx[i].mul(inv[i][j]);
            mu = mu.add(w.mul(Dd(ys[j], 0.0)));
            quad = quad.add(w.mul(kx[j]));
        }
    }
    (mu.0, Dd(se_kernel(q, q, ell, sf2), 0.0).sub(quad).0.max(0.0))
}

/// Stratified Monte-Carlo estimate of `E[max(0, f - f_best)]` for
/// `f ~ N(mu, sigma^2)`: a jittered `side x side` grid over the unit square
/// pushed through Box-Muller, two normals per cell.
pub fn ei_monte_carlo(mu: f64, sigma: f64, f_best: f64, side: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut acc = 0.0;
    for i in 0..side {
        for j in 0..side {
            let u1 = (i as f64 + r.random::<f64>()) / side as f64;
            let u2 = (j as f64 + r.random::<f64>()) / side as f64;
            let rad = (-2.0 * (1.0 - u1).ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            for z in [rad * th.cos(), rad * th.sin()] {
                acc += (mu + sigma * z - f_best).max(0.0);
            }
        }
    }
    acc / (2 * side * side) as f64
}

/// Bit-at-a-time reflected CRC-32, polynomial 0xEDB88320.
pub fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

/// Nearest IMU sample by full scan; the first index wins ties.
pub fn brute_force_sync(frames: &[SensorFrame], imu: &[ImuSample], tol: u64) -> Vec<Option<usize>> {
    frames
        .iter()
        .map(|f| {
            let mut best: Option<(usize, u64)> = None;
            for (i, s) in imu.iter().enumerate() {
                let d = s.timestamp_us.abs_diff(f.timestamp_us);
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((i, d));
                }
            }
            best.filter(|&(_, d)| d <= tol).map(|(i, _)| i)
        })
        .collect()
}

/// Maximum-weight bipartite matching by enumeration over a score matrix;
/// only entries `>= threshold` may be used. Returns the chosen `(a, b)`
/// pairs sorted, and the total weight.
pub fn exhaustive_matching(scores: &[Vec<f64>], threshold: f64) -> (Vec<(usize, usize)>, f64) {
    fn go(
        a: usize,
        scores: &[Vec<f64>],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        total: f64,
        best: &mut (Vec<(usize, usize)>, f64),
    ) {
        if a == scores.len() {
            if total > best.1 {
                *best = (cur.clone(), total);
            }
            return;
        }
        go(a + 1, scores, thr, used, cur, total, best);
        for b in 0..used.len() {
            if !used[b] && scores[a][b] >= thr {
                used[b] = true;
                cur.push((a, b));
                go(a + 1, scores, thr, used, cur, total + scores[a][b], best);
                cur.pop();
                used[b] = false;
            }
        }
    }
    let nb = scores.first().map_or(0, Vec::len);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(0, scores, threshold, &mut vec![false; nb], &mut Vec::new(), 0.0, &mut best);
    best.0.sort();
    best
}

/// Smallest gap between a pair chosen by the optimal matching and any other
/// usable pair sharing one of its endpoints; infinite when nothing competes.
pub fn matching_margin(scores: &[Vec<f64>], threshold: f64, chosen: &[(usize, usize)]) -> f64 {
    let mut margin = f64::INFINITY;
    for &(a, b) in chosen {
        let s = scores[a][b];
        for (i, row) in scores.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if (i, j) != (a, b) && (i == a || j == b) && v >= threshold {
                    margin = margin.min(s - v);
                }
            }
        }
    }
    margin
}

/// Best assignment of predictions to truths (each used at most once) by
/// enumeration: most matches with similarity `>= threshold`, then highest
/// total similarity.
pub fn exhaustive_assignment(sim: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    fn go(
        p: usize,
        sim: &[Vec<f64>],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        score: (usize, f64),
        best: &mut (Vec<Option<usize>>, (usize, f64)),
    ) {
        if p == sim.len() {
            if score.0 > best.1 .0 || (score.0 == best.1 .0 && score.1 > best.1 .1) {
                *best = (cur.clone(), score);
            }
            return;
        }
        cur.push(None);
        go(p + 1, sim, thr, used, cur, score, best);
        cur.pop();
        for t in 0..used.len() {
            if !used[t] && sim[p][t] >= thr {
                used[t] = true;
                cur.push(Some(t));
                go(p + 1, sim, thr, used, cur, (score.0 + 1, score.1 + sim[p][t]), best);
                cur.pop();
                used[t] = false;
            }
        }
    }
    let nt = sim.first().map_or(0, Vec::len);
    let mut best = (vec![None; sim.len()], (0, f64::NEG_INFINITY));
    go(0, sim, threshold, &mut vec![false; nt], &mut Vec::new(), (0, 0.0), &mut best);
    best.0
}

/// 1-norm condition number `|A|_1 |A^-1|_1` via the dense inverse.
pub fn condition_number_1(a: &[Vec<f64>]) -> f64 {
    let norm = |m: &[Vec<f64>]| {
        (0..m.len()).map(|j| m.iter().map(|r| r[j].abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    norm(a) * norm(&dense_inverse(a))
}

pub fn gram(xs: &[Vec<f64>], ell: f64, sf2: f64) -> Vec<Vec<f64>> {
    xs.iter().map(|a| xs.iter().map(|b| se_kernel(a, b, ell, sf2)).collect()).collect()
}

/// A random design of `1..=10` points in `1..=3` dims with targets in
/// `[-2, 2)`. With `max_cond`, designs whose noiseless Gram matrix is worse
/// conditioned are redrawn; returns the number of redraws.
pub fn random_design(seed: u64, max_cond: Option<f64>) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
    let mut r = rng(seed);
    let mut redraws = 0;
    loop {
        let d = r.random_range(1..=3);
        let n = r.random_range(1..=10);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        match max_cond {
            Some(c) if condition_number_1(&gram(&xs, 0.2, 1.0)) > c => redraws += 1,
            _ => return (xs, ys, redraws),
        }
    }
}
