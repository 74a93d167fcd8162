//! Self-describing binary container for problem instances.
//!
//! Layout (little endian): an 8-byte magic, a u32 version, the header
//! integers (n, p, p1, p2, seed flag + seed), the certificate (method tag,
//! L, sigma, residual), then for every component the matrix in row-major
//! order followed by the offset vector. The loader revalidates the cached
//! mean and the certificate before handing the problem back.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::operators::{
    CertificationMethod, CocoercivityCertificate, FiniteSumProblem, OperatorError,
};

const MAGIC: &[u8; 8] = b"FSPROB01";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProblemIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a problem file (bad magic)")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("stored certificate disagrees with recomputation: stored {stored}, got {got}")]
    CertificateMismatch { stored: f64, got: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn save_problem(
    path: &Path,
    problem: &FiniteSumProblem,
    cert: &CocoercivityCertificate,
) -> Result<(), ProblemIoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let (p1, p2) = problem.block_dims().unwrap_or((0, 0));
    write_u64(&mut w, problem.n() as u64)?;
    write_u64(&mut w, problem.dim() as u64)?;
    write_u64(&mut w, p1 as u64)?;
    write_u64(&mut w, p2 as u64)?;
    match problem.seed() {
        Some(s) => {
            write_u64(&mut w, 1)?;
            write_u64(&mut w, s)?;
        }
        None => {
            write_u64(&mut w, 0)?;
            write_u64(&mut w, 0)?;
        }
    }
    let tag: u64 = match cert.method {
        CertificationMethod::ExactEigen => 0,
        CertificationMethod::PowerIteration => 1,
    };
    write_u64(&mut w, tag)?;
    write_f64(&mut w, cert.l)?;
    write_f64(&mut w, cert.sigma)?;
    write_f64(&mut w, cert.residual)?;
    let p = problem.dim();
    for i in 0..problem.n() {
        let m = problem.component_matrix(i);
        for r in 0..p {
            for c in 0..p {
                write_f64(&mut w, m[(r, c)])?;
            }
        }
        let g = problem.component_offset(i);
        for r in 0..p {
            write_f64(&mut w, g[r])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_problem(
    path: &Path,
) -> Result<(FiniteSumProblem, CocoercivityCertificate), ProblemIoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ProblemIoError::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(ProblemIoError::BadVersion(version));
    }
    let n = read_u64(&mut r)? as usize;
    let p = read_u64(&mut r)? as usize;
    let p1 = read_u64(&mut r)? as usize;
    let p2 = read_u64(&mut r)? as usize;
    let has_seed = read_u64(&mut r)? == 1;
    let seed = read_u64(&mut r)?;
    if n == 0 || p == 0 || n > 10_000_000 || p > 100_000 {
        return Err(ProblemIoError::Corrupt(format!("implausible sizes n={n} p={p}")));
    }
    let tag = read_u64(&mut r)?;
    let method = match tag {
        0 => CertificationMethod::ExactEigen,
        1 => CertificationMethod::PowerIteration,
        other => return Err(ProblemIoError::Corrupt(format!("unknown method tag {other}"))),
    };
    let l = read_f64(&mut r)?;
    let sigma = read_f64(&mut r)?;
    let residual = read_f64(&mut r)?;
    let stored = CocoercivityCertificate { l, sigma, method, residual };

    let mut matrices = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = DMatrix::zeros(p, p);
        for row in 0..p {
            for col in 0..p {
                m[(row, col)] = read_f64(&mut r)?;
            }
        }
        matrices.push(m);
        let mut g = DVector::zeros(p);
        for row in 0..p {
            g[row] = read_f64(&mut r)?;
        }
        offsets.push(g);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ProblemIoError::Corrupt("trailing bytes".into()));
    }

    let mut problem = FiniteSumProblem::from_parts(matrices, offsets)?;
    if has_seed {
        problem.set_provenance(seed, (p1, p2));
    }
    // Revalidate the certificate against the data.
    let fresh = problem.certify_cocoercivity(1e-8)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    if rel(stored.l, fresh.l) > 1e-6 {
        return Err(ProblemIoError::CertificateMismatch { stored: stored.l, got: fresh.l });
    }
    if rel(stored.sigma, fresh.sigma) > 1e-6 {
        return Err(ProblemIoError::CertificateMismatch { stored: stored.sigma, got: fresh.sigma });
    }
    Ok((problem, stored))
}

const INCLUSION_MAGIC: &[u8; 8] = b"FSINCL01";

/// Writes an inclusion problem: the operator descriptor block (variant
/// tag + payload + lambda + L_g) followed by the embedded finite-sum
/// problem in the format above.
pub fn save_inclusion_problem(
    path: &Path,
    problem: &crate::inclusion::InclusionProblem,
    cert: &CocoercivityCertificate,
) -> Result<(), ProblemIoError> {
    use crate::inclusion::MaximalOperator;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(INCLUSION_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_f64(&mut w, problem.lambda)?;
    write_f64(&mut w, problem.l_g)?;
    match &problem.t {
        MaximalOperator::Zero => write_u64(&mut w, 0)?,
        MaximalOperator::SimplexNormalCone { p1, p2 } => {
            write_u64(&mut w, 1)?;
            write_u64(&mut w, *p1 as u64)?;
            write_u64(&mut w, *p2 as u64)?;
        }
        MaximalOperator::AffineCoHypo { matrix, offset, .. } => {
            write_u64(&mut w, 2)?;
            let p = matrix.nrows();
            write_u64(&mut w, p as u64)?;
            for r in 0..p {
                for c in 0..p {
                    write_f64(&mut w, matrix[(r, c)])?;
                }
            }
            for r in 0..p {
                write_f64(&mut w, offset[r])?;
            }
        }
    }
    w.flush()?;
    drop(w);
    // embedded finite-sum block, appended in the standard format
    let tmp = path.with_extension("g.tmp");
    save_problem(&tmp, &problem.g, cert)?;
    let bytes = std::fs::read(&tmp)?;
    std::fs::remove_file(&tmp)?;
    let mut w = std::fs::OpenOptions::new().append(true).open(path)?;
    w.write_all(&bytes)?;
    Ok(())
}

pub fn load_inclusion_problem(
    path: &Path,
) -> Result<(crate::inclusion::InclusionProblem, CocoercivityCertificate), ProblemIoError> {
    use crate::inclusion::MaximalOperator;
    let bytes = std::fs::read(path)?;
    let mut r: &[u8] = &bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != INCLUSION_MAGIC {
        return Err(ProblemIoError::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    if u32::from_le_bytes(vbuf) != VERSION {
        return Err(ProblemIoError::BadVersion(u32::from_le_bytes(vbuf)));
    }
    let lambda = read_f64(&mut r)?;
    let l_g = read_f64(&mut r)?;
    let t = match read_u64(&mut r)? {
        0 => MaximalOperator::Zero,
        1 => {
            let p1 = read_u64(&mut r)? as usize;
            let p2 = read_u64(&mut r)? as usize;
            MaximalOperator::SimplexNormalCone { p1, p2 }
        }
        2 => {
            let p = read_u64(&mut r)? as usize;
            if p > 100_000 {
                return Err(ProblemIoError::Corrupt("implausible operator size".into()));
            }
            let mut m = DMatrix::zeros(p, p);
            for row in 0..p {
                for col in 0..p {
                    m[(row, col)] = read_f64(&mut r)?;
                }
            }
            let mut g = DVector::zeros(p);
            for row in 0..p {
                g[row] = read_f64(&mut r)?;
            }
            MaximalOperator::affine(m, g)
                .map_err(|e| ProblemIoError::Corrupt(format!("operator block: {e}")))?
        }
        other => return Err(ProblemIoError::Corrupt(format!("unknown operator tag {other}"))),
    };
    // remaining bytes: the embedded finite-sum block
    let tmp = path.with_extension("g.tmp");
    std::fs::write(&tmp, r)?;
    let loaded = load_problem(&tmp);
    std::fs::remove_file(&tmp)?;
    let (g, cert) = loaded?;
    let problem = crate::inclusion::InclusionProblem::new(g, t, lambda, l_g)
        .map_err(|e| ProblemIoError::Corrupt(format!("invalid inclusion parameters: {e}")))?;
    Ok((problem, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{generate_minimax, MinimaxSpec};

    #[test]
    fn round_trip_preserves_bits() {
        let dir = std::env::temp_dir().join(format!("vrkm_io_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inst.bin");
        let (prob, cert) = generate_minimax(&MinimaxSpec::new(3, 2, 4, 7)).unwrap();
        save_problem(&path, &prob, &cert).unwrap();
        let (loaded, loaded_cert) = load_problem(&path).unwrap();
        assert_eq!(prob, loaded);
        assert_eq!(cert.l.to_bits(), loaded_cert.l.to_bits());
        assert_eq!(cert.sigma.to_bits(), loaded_cert.sigma.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn inclusion_round_trip_with_operator_block() {
        use crate::inclusion::{InclusionProblem, MaximalOperator};
        let dir = std::env::temp_dir().join(format!("vrkm_io_inc_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (g, cert) = generate_minimax(&MinimaxSpec::new(3, 2, 4, 9)).unwrap();
        let agg = g.aggregate_cocoercivity(1e-8).unwrap();
        for (name, t) in [
            ("zero.bin", MaximalOperator::Zero),
            ("simplex.bin", MaximalOperator::SimplexNormalCone { p1: 3, p2: 2 }),
        ] {
            let inc = InclusionProblem::new(g.clone(), t, 1.0 / agg.l, agg.l).unwrap();
            let path = dir.join(name);
            save_inclusion_problem(&path, &inc, &cert).unwrap();
            let (loaded, _) = load_inclusion_problem(&path).unwrap();
            assert_eq!(loaded.g, inc.g);
            assert_eq!(loaded.lambda.to_bits(), inc.lambda.to_bits());
            assert_eq!(loaded.l.to_bits(), inc.l.to_bits());
            let x = DVector::from_element(5, 0.3);
            assert_eq!(
                loaded.resolvent(&x).unwrap(),
                inc.resolvent(&x).unwrap()
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join(format!("vrkm_io_bad_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("junk.bin");
        std::fs::write(&path, b"NOTAPROB-----").unwrap();
        assert!(matches!(load_problem(&path), Err(ProblemIoError::BadMagic)));
        std::fs::remove_dir_all(&dir).ok();
    }
}
