// optional backend; only imported dynamically when --encoder clip is used
declare module "@xenova/transformers";
