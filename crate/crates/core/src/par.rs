//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the `map_*` helpers run on the rayon pool when
//! asked to; without it they always run sequentially. Every helper returns its
//! results in input order, so callers that reduce afterwards get bitwise
//! identical answers in both modes.

/// Execution mode requested by a caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map_range<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Sets the global pool size from `DLDG_THREADS`, if set. Returns the value used.
pub fn init_threads_from_env() -> Option<usize> {
    let n = std::env::var("DLDG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)?;
    #[cfg(feature = "parallel")]
    {
        // Fails only if the pool was already built; the existing pool stays.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_range(Execution::Parallel, 1000, f);
        let b = map_range(Execution::Sequential, 1000, f);
        assert_eq!(a, b);
        let xs: Vec<u32> = (0..257).collect();
        assert_eq!(
            map_slice(Execution::Parallel, &xs, |x| x * 2),
            map_slice(Execution::Sequential, &xs, |x| x * 2)
        );
    }
}
