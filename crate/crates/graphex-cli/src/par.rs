//! Indexed parallel map over replicate indices with scoped threads.
//!
//! Results land in their index's slot, so the output is identical whatever
//! the thread count or scheduling.

use std::sync::atomic::{AtomicUsize, Ordering};

pub fn indexed_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.max(1).min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let next = AtomicUsize::new(0);
    let f = &f;
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for _ in 0..workers {
            let next = &next;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        return out;
                    }
                    out.push((i, f(i)));
                }
            }));
        }
        for handle in handles {
            for (i, value) in handle.join().expect("worker panicked") {
                slots[i] = Some(value);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let seq = indexed_map(100, 1, |i| i * i);
        let par = indexed_map(100, 8, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(indexed_map(0, 4, |i| i), Vec::<usize>::new());
        assert_eq!(indexed_map(1, 4, |i| i + 7), vec![7]);
    }
}
