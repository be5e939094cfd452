//! A batch whose envs hold chains with different joint counts, and the
//! padded buffers that result.

use batchsim::tasks::chain::{chain_descriptor, chain_library};
use batchsim::scene::SceneBatch;

fn main() {
    let dofs = [2, 4, 6, 3];
    let scene = SceneBatch::build(&chain_library().unwrap(), dofs.iter().map(|d| chain_descriptor(*d)).collect(), 0).unwrap();
    println!("{} envs, dof_max {}, layout {}", scene.num_envs(), scene.dof_max(), scene.layout_hash());
    let mask = scene.dof_mask();
    for (e, row) in mask.chunks(scene.dof_max()).enumerate() {
        let bits: String = row.iter().map(|m| if *m { '1' } else { '.' }).collect();
        println!("env {e}: {bits}");
    }
}
