pub mod dump;
pub mod evaluate;
pub mod extract;
pub mod gradcheck;
pub mod init;
pub mod train;
