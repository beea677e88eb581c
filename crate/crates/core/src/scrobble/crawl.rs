use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ScrobbleClient, ScrobbleError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlPlan {
    pub seed_usernames: Vec<String>,
    pub target_user_count: usize,
    pub rng_seed: u64,
    pub max_friends_per_user: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlResult {
    /// Users in the order they were reached; seeds first.
    pub usernames: Vec<String>,
    /// True when the reachable graph ran out before the target was met.
    pub exhausted: bool,
}

impl ScrobbleClient {
    /// Breadth-first crawl of the public friends graph.
    ///
    /// Level by level, users are expanded in an order shuffled by the plan's
    /// seed; each expansion reads at most `max_friends_per_user` friends and
    /// admits unseen ones. Only users whose friends list can be read are
    /// admitted. A missing seed is an error; unreadable friends are skipped.
    pub async fn crawl_social_graph(&self, plan: &CrawlPlan) -> Result<CrawlResult, ScrobbleError> {
        if plan.seed_usernames.is_empty() || plan.target_user_count == 0 {
            return Err(ScrobbleError::InvalidRequest(
                "crawl needs at least one seed and a positive target".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
        let mut seen: HashSet<String> = HashSet::new();
        let mut admitted = Vec::new();
        let mut level: Vec<(String, Vec<String>)> = Vec::new();

        for seed in &plan.seed_usernames {
            if !seen.insert(seed.clone()) {
                continue;
            }
            let friends = self.fetch_friends(seed, plan.max_friends_per_user).await?;
            if admitted.len() < plan.target_user_count {
                admitted.push(seed.clone());
            }
            level.push((seed.clone(), friends));
        }

        while admitted.len() < plan.target_user_count {
            let mut candidates = Vec::new();
            for (_, friends) in &level {
                for f in friends {
                    if seen.insert(f.clone()) {
                        candidates.push(f.clone());
                    }
                }
            }
            if candidates.is_empty() {
                return Ok(CrawlResult {
                    usernames: admitted,
                    exhausted: true,
                });
            }
            candidates.shuffle(&mut rng);
            let mut next = Vec::new();
            for user in candidates {
                if admitted.len() >= plan.target_user_count {
                    break;
                }
                match self.fetch_friends(&user, plan.max_friends_per_user).await {
                    Ok(friends) => {
                        admitted.push(user.clone());
                        next.push((user, friends));
                    }
                    Err(
                        ScrobbleError::UserNotFound(_)
                        | ScrobbleError::PrivateAccount(_)
                        | ScrobbleError::MalformedPage { .. },
                    ) => {
                        tracing::debug!(user, "skipping unreachable user");
                    }
                    Err(e) => return Err(e),
                }
            }
            level = next;
        }
        Ok(CrawlResult {
            usernames: admitted,
            exhausted: false,
        })
    }
}
