//! Parsing the bundled MJCF and URDF descriptions.

use batchsim::assets::{load_mjcf, load_urdf};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/assets");
    let mjcf = load_mjcf(&std::fs::read_to_string(format!("{dir}/cartpole.xml")).unwrap()).unwrap();
    let urdf = load_urdf(&std::fs::read_to_string(format!("{dir}/pendulum2.urdf")).unwrap()).unwrap();
    for t in mjcf.value.iter().chain(std::iter::once(&urdf.value)) {
        let joints: Vec<&str> = t.joints.iter().map(|j| j.name.as_str()).collect();
        println!("{}: {} links, {} dof, joints {joints:?}", t.name, t.links.len(), t.dof());
    }
    for w in mjcf.warnings.iter().chain(&urdf.warnings) {
        println!("warning: {w}");
    }
}
