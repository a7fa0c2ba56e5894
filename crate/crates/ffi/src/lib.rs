#[no_mangle]
pub extern "C" fn gatemon_ffi_placeholder() -> i32 { 0 }
