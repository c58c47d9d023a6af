use leaklab_core::games::bundled_url_list;
use sha2::{Digest, Sha256};

#[test]
fn bundled_url_list_is_pinned() {
    let joined = bundled_url_list().join("\n");
    let hex: String = Sha256::digest(joined.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "c3bddf0ed085c11bce4ec9dc9418ac048f48cf93092d6f43bbffd930d9cbff20");
}
