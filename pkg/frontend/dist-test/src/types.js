/** Payload shapes of the session API. The console never recomputes any of
 * these values; it renders them verbatim (formatting only). */
export {};
