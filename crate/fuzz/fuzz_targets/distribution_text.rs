#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetax::composite::DistributionVector;

fuzz_target!(|text: &str| {
    if let Ok(d) = DistributionVector::parse(0, text) {
        let rendered = d.render();
        assert_eq!(DistributionVector::parse(0, &rendered).expect("rendered text parses"), d);
    }
});
