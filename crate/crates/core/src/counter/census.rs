use super::bounds::{propagate_bounds, Interval};
use super::{ClassCensus, ClassStatus, CounterError, ReducerNet, SecretDomain};
use crate::dataset::DomainSize;

/// Largest domain brute-force enumeration accepts.
pub const BRUTE_FORCE_LIMIT: u128 = 1 << 20;
pub const DEFAULT_BUDGET: u64 = 100_000_000;

fn check_dims(r: &ReducerNet, dom: &SecretDomain) -> Result<(), CounterError> {
    if r.n() != dom.domains.len() {
        return Err(CounterError::InvalidReducer(format!(
            "reducer takes {} secrets, domain has {}",
            r.n(),
            dom.domains.len()
        )));
    }
    Ok(())
}

/// Census by evaluating the reducer on every domain element. Exact uncapped
/// counts are retained in `true_counts`.
pub fn brute_force_census(
    r: &ReducerNet,
    dom: &SecretDomain,
    cap: Option<u64>,
) -> Result<ClassCensus, CounterError> {
    check_dims(r, dom)?;
    if cap == Some(0) {
        return Err(CounterError::InvalidCap);
    }
    match dom.size() {
        DomainSize::Finite(n) if n <= BRUTE_FORCE_LIMIT => {}
        DomainSize::Finite(n) => return Err(CounterError::DomainTooLarge(n.to_string())),
        DomainSize::Unbounded => return Err(CounterError::DomainTooLarge("> 2^128".into())),
    }
    let mut counts = vec![0u64; 1 << r.k()];
    let mut nodes = 0;
    dom.for_each(|x| {
        counts[r.valuation(x)] += 1;
        nodes += 1;
    });
    Ok(ClassCensus {
        k: r.k(),
        cap,
        classes: counts.iter().map(|&c| ClassStatus::from_count(c, cap)).collect(),
        complete: true,
        nodes,
        true_counts: Some(counts),
        model_hash: None,
        manifest_hash: None,
    })
}

/// Depth-first search state.
struct Search<'a> {
    r: &'a ReducerNet,
    k: usize,
    cap: u64,
    counts: Vec<u64>,
    saturated: usize,
    nodes: u64,
    budget: u64,
    binary: Vec<bool>,
}

impl Search<'_> {
    fn add(&mut self, v: usize, n: u64) {
        let before = self.counts[v];
        if before >= self.cap {
            return;
        }
        let after = before.saturating_add(n).min(self.cap);
        self.counts[v] = after;
        if after >= self.cap {
            self.saturated += 1;
        }
    }

    /// Some valuation consistent with the fixed bits is still below the cap.
    fn any_open(&self, fixed_mask: usize, fixed_val: usize) -> bool {
        if self.saturated == 0 {
            return true;
        }
        let free = !fixed_mask & ((1usize << self.k) - 1);
        // enumerate subsets of the free bits
        let mut sub = free;
        loop {
            if self.counts[fixed_val | sub] < self.cap {
                return true;
            }
            if sub == 0 {
                return false;
            }
            sub = (sub - 1) & free;
        }
    }

    /// Binary features first (lowest index), then the widest integer range.
    fn branch_feature(&self, region: &[(i64, i64)]) -> Option<usize> {
        let open = |j: &usize| region[*j].0 < region[*j].1;
        (0..region.len())
            .filter(open)
            .find(|&j| self.binary[j])
            .or_else(|| {
                (0..region.len())
                    .filter(open)
                    .max_by(|&a, &b| {
                        let wa = region[a].1 - region[a].0;
                        let wb = region[b].1 - region[b].0;
                        wa.cmp(&wb).then(b.cmp(&a))
                    })
            })
    }

    fn run(&mut self, root: Vec<(i64, i64)>) -> bool {
        let mut stack = vec![root];
        while let Some(region) = stack.pop() {
            if self.nodes >= self.budget {
                return false;
            }
            self.nodes += 1;

            let Some(j) = self.branch_feature(&region) else {
                let x: Vec<f64> = region.iter().map(|&(l, _)| l as f64).collect();
                let v = self.r.valuation(&x);
                self.add(v, 1);
                continue;
            };

            let ivs: Vec<Interval> = region
                .iter()
                .map(|&(l, h)| Interval::new(l as f64, h as f64))
                .collect();
            let (mut mask, mut val) = (0usize, 0usize);
            for (i, b) in propagate_bounds(self.r, &ivs).iter().enumerate() {
                if let Some(bit) = b.bit() {
                    let pos = self.k - 1 - i;
                    mask |= 1 << pos;
                    val |= (bit as usize) << pos;
                }
            }
            if !self.any_open(mask, val) {
                continue;
            }
            if mask == (1 << self.k) - 1 {
                let size = region
                    .iter()
                    .try_fold(1u128, |acc, &(l, h)| acc.checked_mul((h - l) as u128 + 1))
                    .map_or(u64::MAX, |s| u64::try_from(s).unwrap_or(u64::MAX));
                self.add(val, size);
                continue;
            }

            let (lo, hi) = region[j];
            let mid = lo + (hi - lo) / 2;
            let mut upper = region.clone();
            upper[j] = (mid + 1, hi);
            let mut lower = region;
            lower[j] = (lo, mid);
            stack.push(upper);
            stack.push(lower);
        }
        true
    }
}

/// Census by branch and bound over the secret domain.
///
/// Each search node is a box of secret values. Interval bounds through the
/// reducer fix some interface bits over the whole box; the box is dropped
/// when every valuation it could still reach is already at the cap, and is
/// counted in closed form when all `k` bits are fixed. Otherwise it is split:
/// binary features first, then the widest integer range is bisected.
///
/// Agrees exactly with [`brute_force_census`] under the same cap. When the
/// node budget runs out the partial census is returned inside
/// [`CounterError::BudgetExhausted`].
pub fn bnb_census(
    r: &ReducerNet,
    dom: &SecretDomain,
    cap: u64,
    budget: u64,
) -> Result<ClassCensus, CounterError> {
    check_dims(r, dom)?;
    if cap == 0 {
        return Err(CounterError::InvalidCap);
    }
    let k = r.k();
    let mut s = Search {
        r,
        k,
        cap,
        counts: vec![0; 1 << k],
        saturated: 0,
        nodes: 0,
        budget,
        binary: dom.domains.iter().map(|d| d.is_binary()).collect(),
    };
    let root = dom.domains.iter().map(|d| (d.lo(), d.hi())).collect();
    let complete = s.run(root);

    let classes = s
        .counts
        .iter()
        .map(|&c| match ClassStatus::from_count(c, Some(cap)) {
            ClassStatus::Infeasible if !complete => ClassStatus::Unresolved,
            st => st,
        })
        .collect();
    let census = ClassCensus {
        k,
        cap: Some(cap),
        classes,
        complete,
        nodes: s.nodes,
        true_counts: None,
        model_hash: None,
        manifest_hash: None,
    };
    if complete {
        Ok(census)
    } else {
        Err(CounterError::BudgetExhausted {
            nodes: s.nodes,
            partial: Box::new(census),
        })
    }
}
