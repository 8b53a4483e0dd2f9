use super::{BinaryImage, Skeleton};

/// Deletes every branch running from an endpoint to the first junction whose length (in
/// pixels, junction excluded) is at most `max_spur_px`. Repeats until no such branch is left,
/// since removing a spur can turn its junction into an ordinary line pixel.
pub fn prune_spurs(skel: &Skeleton, max_spur_px: usize) -> Skeleton {
    let mut img = skel.image().clone();
    if max_spur_px == 0 {
        return Skeleton::from_image_unchecked(img);
    }
    loop {
        let spurs = find_spurs(&img, max_spur_px);
        if spurs.is_empty() {
            break;
        }
        for i in spurs {
            img.data_mut()[i] = false;
        }
    }
    Skeleton::from_image_unchecked(img)
}

/// Pixels of all spurs in the current image. Branches that end at another endpoint (isolated
/// lines) are not spurs.
fn find_spurs(img: &BinaryImage, max_len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for start in 0..img.data().len() {
        if !img.data()[start] || img.neighbor_count(start) != 1 {
            continue;
        }
        let mut path = vec![start];
        let mut prev = usize::MAX;
        let mut cur = start;
        let reached_junction = loop {
            let next: Vec<usize> = img
                .neighbors8(cur)
                .filter(|&j| img.data()[j] && j != prev && !path.contains(&j))
                .collect();
            if next.len() != 1 {
                break false;
            }
            let n = next[0];
            let deg = img.neighbor_count(n);
            if deg >= 3 {
                break true;
            }
            if deg <= 1 {
                break false;
            }
            path.push(n);
            if path.len() > max_len {
                break false;
            }
            prev = cur;
            cur = n;
        };
        if reached_junction && path.len() <= max_len {
            out.extend(path);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
