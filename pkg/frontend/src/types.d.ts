// Optional dependency, loaded dynamically; installs are not required for the
// offline hash encoder path.
declare module "@xenova/transformers";
