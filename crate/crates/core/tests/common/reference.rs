//! Plain-loop forward pass of the two-path concatenation network, written
//! without the tape: direct convolution loops, batch statistics, max
//! pooling and a 0.75/0.25 bilinear stencil.

use bagau_core::params::ParameterSet;
use bagau_core::Tensor;

#[derive(Clone)]
pub struct Map {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Map {
    fn zeros(n: usize, c: usize, h: usize, w: usize) -> Map {
        Map {
            n,
            c,
            h,
            w,
            v: vec![0.0; n * c * h * w],
        }
    }
    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }
    fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.v[((n * self.c + c) * self.h + y) * self.w + x]
    }
}

struct Ref<'a> {
    p: &'a ParameterSet<f64>,
}

impl Ref<'_> {
    fn param(&self, name: &str) -> (&[f64], [usize; 4]) {
        let id = self.p.find(name).unwrap_or_else(|| panic!("missing parameter {name}"));
        let t = self.p.get(id);
        (t.data(), t.shape())
    }

    fn conv(&self, x: &Map, name: &str, bias: bool) -> Map {
        let (w, [co, ci, k, _]) = self.param(&format!("{name}.weight"));
        assert_eq!(ci, x.c);
        let pad = (k / 2) as isize;
        let mut y = Map::zeros(x.n, co, x.h, x.w);
        for n in 0..x.n {
            for o in 0..co {
                let b = if bias {
                    self.param(&format!("{name}.bias")).0[o]
                } else {
                    0.0
                };
                for yy in 0..x.h {
                    for xx in 0..x.w {
                        let mut s = b;
                        for i in 0..ci {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = yy as isize + ky as isize - pad;
                                    let sx = xx as isize + kx as isize - pad;
                                    if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                        continue;
                                    }
                                    s += w[((o * ci + i) * k + ky) * k + kx] * x.at(n, i, sy as usize, sx as usize);
                                }
                            }
                        }
                        *y.at_mut(n, o, yy, xx) = s;
                    }
                }
            }
        }
        y
    }

    /// Batch statistics over (N, H, W), biased variance, eps 1e-5, then ReLU.
    fn bn_relu(&self, x: &Map, name: &str) -> Map {
        let gamma = self.param(&format!("{name}.gamma")).0;
        let beta = self.param(&format!("{name}.beta")).0;
        let mut y = x.clone();
        let cnt = (x.n * x.h * x.w) as f64;
        for c in 0..x.c {
            let vals: Vec<f64> = (0..x.n)
                .flat_map(|n| (0..x.h).flat_map(move |yy| (0..x.w).map(move |xx| (n, yy, xx))))
                .map(|(n, yy, xx)| x.at(n, c, yy, xx))
                .collect();
            let mean = vals.iter().sum::<f64>() / cnt;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cnt;
            for n in 0..x.n {
                for yy in 0..x.h {
                    for xx in 0..x.w {
                        let z = gamma[c] * (x.at(n, c, yy, xx) - mean) / (var + 1e-5).sqrt() + beta[c];
                        *y.at_mut(n, c, yy, xx) = z.max(0.0);
                    }
                }
            }
        }
        y
    }

    fn unit(&self, x: &Map, prefix: &str, suffix: &str) -> Map {
        let y = self.conv(x, &format!("{prefix}.conv{suffix}"), false);
        self.bn_relu(&y, &format!("{prefix}.bn{suffix}"))
    }

    fn double(&self, x: &Map, prefix: &str) -> Map {
        let y = self.unit(x, prefix, "1");
        self.unit(&y, prefix, "2")
    }

    fn up(&self, x: &Map, prefix: &str) -> Map {
        self.unit(&upsample(x), prefix, "")
    }
}

fn pool(x: &Map) -> Map {
    let mut y = Map::zeros(x.n, x.c, x.h / 2, x.w / 2);
    for n in 0..x.n {
        for c in 0..x.c {
            for yy in 0..x.h / 2 {
                for xx in 0..x.w / 2 {
                    let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|(dy, dx)| x.at(n, c, 2 * yy + dy, 2 * xx + dx))
                        .fold(f64::NEG_INFINITY, f64::max);
                    *y.at_mut(n, c, yy, xx) = m;
                }
            }
        }
    }
    y
}

/// 2x bilinear with half-pixel centres: output `2i` mixes 3/4 of input `i`
/// with 1/4 of `i - 1`, output `2i + 1` with 1/4 of `i + 1`; edges clamp.
fn upsample(x: &Map) -> Map {
    let taps = |o: usize, len: usize| -> [(usize, f64); 2] {
        let i = o / 2;
        let other = if o.is_multiple_of(2) {
            i.saturating_sub(1)
        } else {
            (i + 1).min(len - 1)
        };
        [(i, 0.75), (other, 0.25)]
    };
    let mut y = Map::zeros(x.n, x.c, 2 * x.h, 2 * x.w);
    for n in 0..x.n {
        for c in 0..x.c {
            for oy in 0..2 * x.h {
                for ox in 0..2 * x.w {
                    let mut s = 0.0;
                    for (iy, wy) in taps(oy, x.h) {
                        for (ix, wx) in taps(ox, x.w) {
                            s += wy * wx * x.at(n, c, iy, ix);
                        }
                    }
                    *y.at_mut(n, c, oy, ox) = s;
                }
            }
        }
    }
    y
}

fn concat(parts: &[&Map]) -> Map {
    let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut y = Map::zeros(n, c, h, w);
    for b in 0..n {
        let mut off = 0;
        for p in parts {
            for ch in 0..p.c {
                for yy in 0..h {
                    for xx in 0..w {
                        *y.at_mut(b, off + ch, yy, xx) = p.at(b, ch, yy, xx);
                    }
                }
            }
            off += p.c;
        }
    }
    y
}

fn add(a: &Map, b: &Map) -> Map {
    let mut y = a.clone();
    for (o, v) in y.v.iter_mut().zip(&b.v) {
        *o += v;
    }
    y
}

fn encode(r: &Ref, x: &Map, path: &str) -> (Vec<Map>, Map) {
    let mut skips = Vec::new();
    let mut h = x.clone();
    for l in 0..4 {
        let e = r.double(&h, &format!("{path}.enc{l}"));
        h = pool(&e);
        skips.push(e);
    }
    let bottom = r.double(&h, &format!("{path}.bottleneck"));
    (skips, bottom)
}

pub fn reference_plain(params: &ParameterSet<f64>, flair: &Map, atlas: &Map) -> Vec<f64> {
    let r = Ref { p: params };
    let (askips, abottom) = encode(&r, atlas, "atlas");
    let mut afeat = vec![abottom.clone(); 4];
    let mut d = abottom;
    for l in (0..4).rev() {
        let up = r.up(&d, &format!("atlas.up{l}"));
        d = r.double(&add(&up, &askips[l]), &format!("atlas.dec{l}"));
        afeat[l] = d.clone();
    }
    let (sskips, mut d) = encode(&r, flair, "seg");
    for l in (0..4).rev() {
        let up = r.up(&d, &format!("seg.up{l}"));
        d = r.double(&concat(&[&sskips[l], &afeat[l], &up]), &format!("seg.dec{l}"));
    }
    let logits = r.conv(&d, "head", true);
    logits.v.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect()
}

pub fn to_map(t: &Tensor<f64>) -> Map {
    let [n, c, h, w] = t.shape();
    Map {
        n,
        c,
        h,
        w,
        v: t.data().to_vec(),
    }
}
